#pragma once

#include "bench.hpp"
#include "classifier.hpp"
#include "curriculum.hpp"
#include "fft.hpp"
#include "guard.hpp"
#include "io.hpp"
#include "linear_decoder.hpp"
#include "lpf.hpp"
#include "manifest.hpp"
#include "reference_decoder.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "synth.hpp"
#include "tensor.hpp"
