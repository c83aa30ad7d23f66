#pragma once

#include "dsfm/core.hpp"
#include "dsfm/schema.hpp"
#include "dsfm/csv.hpp"
#include "dsfm/synthetic.hpp"
#include "dsfm/tensor.hpp"
#include "dsfm/nn.hpp"
#include "dsfm/base_model.hpp"
#include "dsfm/attribution.hpp"
#include "dsfm/distance.hpp"
#include "dsfm/sensitivity.hpp"
#include "dsfm/attention.hpp"
#include "dsfm/memory_model.hpp"
#include "dsfm/flops.hpp"
#include "dsfm/metrics.hpp"
#include "dsfm/train.hpp"
#include "dsfm/config.hpp"
#include "dsfm/checkpoint.hpp"
#include "dsfm/pipeline.hpp"
