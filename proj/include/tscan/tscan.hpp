#pragma once

#include "tscan/cluster_head.hpp"
#include "tscan/config.hpp"
#include "tscan/corpus.hpp"
#include "tscan/embeddings.hpp"
#include "tscan/error.hpp"
#include "tscan/kmeans.hpp"
#include "tscan/metrics.hpp"
#include "tscan/neighbors.hpp"
#include "tscan/pipeline.hpp"
#include "tscan/random.hpp"
#include "tscan/scan.hpp"
#include "tscan/self_label.hpp"
#include "tscan/structure.hpp"
