#pragma once

#include "asyncps/algorithms.hpp"
#include "asyncps/consistency.hpp"
#include "asyncps/context.hpp"
#include "asyncps/dataset.hpp"
#include "asyncps/delay.hpp"
#include "asyncps/engine.hpp"
#include "asyncps/harness.hpp"
#include "asyncps/libsvm.hpp"
#include "asyncps/linalg.hpp"
#include "asyncps/metrics.hpp"
#include "asyncps/optimizers.hpp"
#include "asyncps/result_queue.hpp"
#include "asyncps/stat_table.hpp"
#include "asyncps/synth.hpp"
#include "asyncps/version_store.hpp"
