// SPDX-License-Identifier: Apache-2.0
#pragma once

// Umbrella header.

#include "pfusion/autograd.hpp"
#include "pfusion/booster.hpp"
#include "pfusion/checkpoint.hpp"
#include "pfusion/config.hpp"
#include "pfusion/cost_model.hpp"
#include "pfusion/dataset.hpp"
#include "pfusion/encoder.hpp"
#include "pfusion/fusion.hpp"
#include "pfusion/gate.hpp"
#include "pfusion/kde.hpp"
#include "pfusion/metrics.hpp"
#include "pfusion/optimizer.hpp"
#include "pfusion/random.hpp"
#include "pfusion/rehearsal.hpp"
#include "pfusion/report.hpp"
#include "pfusion/results.hpp"
#include "pfusion/runner.hpp"
#include "pfusion/stabilizer.hpp"
#include "pfusion/stream.hpp"
#include "pfusion/synthetic.hpp"
#include "pfusion/tensor.hpp"
#include "pfusion/trainer.hpp"
