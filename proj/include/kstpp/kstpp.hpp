#pragma once

#include "kstpp/baselines.hpp"
#include "kstpp/grid_gp.hpp"
#include "kstpp/io.hpp"
#include "kstpp/kernels.hpp"
#include "kstpp/metrics.hpp"
#include "kstpp/model.hpp"
#include "kstpp/objective.hpp"
#include "kstpp/parallel.hpp"
#include "kstpp/pipeline.hpp"
#include "kstpp/predict.hpp"
#include "kstpp/quadrature.hpp"
#include "kstpp/simulate.hpp"
#include "kstpp/tensor.hpp"
#include "kstpp/train.hpp"
