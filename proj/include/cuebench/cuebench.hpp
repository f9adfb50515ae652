#pragma once

// Convenience umbrella for the whole library.

#include "cuebench/baseline.hpp"
#include "cuebench/classify.hpp"
#include "cuebench/common.hpp"
#include "cuebench/corpus.hpp"
#include "cuebench/eval.hpp"
#include "cuebench/features.hpp"
#include "cuebench/geometry.hpp"
#include "cuebench/gist.hpp"
#include "cuebench/image.hpp"
#include "cuebench/parallel.hpp"
#include "cuebench/rng.hpp"
#include "cuebench/splits.hpp"
#include "cuebench/svm.hpp"
