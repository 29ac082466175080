#pragma once

#include "epu/aho_corasick.hpp"
#include "epu/bow.hpp"
#include "epu/corpus.hpp"
#include "epu/csv.hpp"
#include "epu/date.hpp"
#include "epu/error.hpp"
#include "epu/eval.hpp"
#include "epu/fetch.hpp"
#include "epu/index.hpp"
#include "epu/labels.hpp"
#include "epu/parallel.hpp"
#include "epu/scores.hpp"
#include "epu/simlab.hpp"
#include "epu/split.hpp"
#include "epu/text.hpp"
#include "epu/thresholds.hpp"
