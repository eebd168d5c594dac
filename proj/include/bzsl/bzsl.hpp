#pragma once

#include "bzsl/classifier.hpp"
#include "bzsl/cli.hpp"
#include "bzsl/common.hpp"
#include "bzsl/dataset.hpp"
#include "bzsl/eval.hpp"
#include "bzsl/metaclass.hpp"
#include "bzsl/model_io.hpp"
#include "bzsl/ppd.hpp"
#include "bzsl/stats.hpp"
#include "bzsl/synth.hpp"
