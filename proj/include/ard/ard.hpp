#pragma once

#include "ard/analysis/attention.hpp"
#include "ard/analysis/eval.hpp"
#include "ard/analysis/exposure.hpp"
#include "ard/analysis/flops.hpp"
#include "ard/analysis/metrics.hpp"
#include "ard/analysis/report.hpp"
#include "ard/experiment.hpp"
#include "ard/checkpoint.hpp"
#include "ard/inference/sampler.hpp"
#include "ard/rng.hpp"
#include "ard/student/config.hpp"
#include "ard/student/mask.hpp"
#include "ard/student/model.hpp"
#include "ard/student/params.hpp"
#include "ard/teacher/dataset.hpp"
#include "ard/teacher/mixture.hpp"
#include "ard/teacher/ode.hpp"
#include "ard/teacher/presets.hpp"
#include "ard/teacher/schedule.hpp"
#include "ard/tensor.hpp"
#include "ard/training/batch.hpp"
#include "ard/training/discriminator.hpp"
#include "ard/training/loss.hpp"
#include "ard/training/optim.hpp"
#include "ard/training/trainer.hpp"
