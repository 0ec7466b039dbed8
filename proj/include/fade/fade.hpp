#pragma once

#include "fade/bilou.hpp"
#include "fade/bm25.hpp"
#include "fade/config.hpp"
#include "fade/dataset.hpp"
#include "fade/error.hpp"
#include "fade/hybrid.hpp"
#include "fade/kg.hpp"
#include "fade/metrics.hpp"
#include "fade/perturb.hpp"
#include "fade/tokenize.hpp"
