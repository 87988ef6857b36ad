#pragma once

#include "quadrature.hpp"
#include "fft.hpp"
#include "parallel.hpp"
#include "testfn.hpp"
#include "sampler.hpp"
#include "limitlaw.hpp"
#include "statistics.hpp"
#include "determinant.hpp"
#include "experiments.hpp"
