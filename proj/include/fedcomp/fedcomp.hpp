#pragma once

#include "fedcomp/auc.hpp"
#include "fedcomp/compositional.hpp"
#include "fedcomp/core.hpp"
#include "fedcomp/data.hpp"
#include "fedcomp/experiment.hpp"
#include "fedcomp/fedsim.hpp"
#include "fedcomp/metrics.hpp"
#include "fedcomp/model.hpp"
#include "fedcomp/optimizers.hpp"
#include "fedcomp/toy.hpp"
