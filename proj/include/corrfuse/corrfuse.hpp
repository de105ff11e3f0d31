#pragma once

#include "corrfuse/annotations.hpp"
#include "corrfuse/error.hpp"
#include "corrfuse/featmap.hpp"
#include "corrfuse/fusion.hpp"
#include "corrfuse/image.hpp"
#include "corrfuse/matching.hpp"
#include "corrfuse/metrics.hpp"
#include "corrfuse/parts.hpp"
#include "corrfuse/pca.hpp"
#include "corrfuse/swap.hpp"
#include "corrfuse/viz.hpp"
