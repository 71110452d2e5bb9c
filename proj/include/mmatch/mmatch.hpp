#pragma once

#include "mmatch/align.hpp"
#include "mmatch/classify.hpp"
#include "mmatch/data.hpp"
#include "mmatch/dissimilarity.hpp"
#include "mmatch/error.hpp"
#include "mmatch/experiment.hpp"
#include "mmatch/mds.hpp"
#include "mmatch/numerics.hpp"
#include "mmatch/tsv.hpp"
