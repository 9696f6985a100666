#pragma once

// Umbrella header.

#include "fsgfa/autodiff.hpp"
#include "fsgfa/checkpoint.hpp"
#include "fsgfa/config.hpp"
#include "fsgfa/data.hpp"
#include "fsgfa/eval.hpp"
#include "fsgfa/explain.hpp"
#include "fsgfa/image.hpp"
#include "fsgfa/layers.hpp"
#include "fsgfa/losses.hpp"
#include "fsgfa/misalign.hpp"
#include "fsgfa/networks.hpp"
#include "fsgfa/ops.hpp"
#include "fsgfa/parallel.hpp"
#include "fsgfa/png_io.hpp"
#include "fsgfa/rng.hpp"
#include "fsgfa/shapeprior.hpp"
#include "fsgfa/svg.hpp"
#include "fsgfa/tensor.hpp"
#include "fsgfa/train.hpp"
