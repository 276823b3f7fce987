#pragma once

// Umbrella header for the estimation library (the command line lives in
// rsae/cli.hpp, which additionally needs CLI11).

#include <rsae/errors.hpp>
#include <rsae/fh_classic.hpp>
#include <rsae/gibbs.hpp>
#include <rsae/io.hpp>
#include <rsae/model.hpp>
#include <rsae/posterior.hpp>
#include <rsae/random.hpp>
#include <rsae/simlab.hpp>
#include <rsae/truncated.hpp>
