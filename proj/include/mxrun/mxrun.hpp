#pragma once

// mxrun: experiment-matrix orchestration. Expands a declarative parameter
// matrix into hash-identified tasks, runs them on a bounded worker pool with
// per-task isolation, caches results in a content-addressed checkpoint store
// for crash-safe resumption, and notifies on completion or failure.

#include "mxrun/checkpoint.hpp"
#include "mxrun/config.hpp"
#include "mxrun/diagnostics.hpp"
#include "mxrun/engine.hpp"
#include "mxrun/expand.hpp"
#include "mxrun/export.hpp"
#include "mxrun/hash.hpp"
#include "mxrun/manifest.hpp"
#include "mxrun/notify.hpp"
#include "mxrun/subprocess.hpp"
#include "mxrun/task_key.hpp"
#include "mxrun/toml.hpp"
#include "mxrun/value.hpp"
#include "mxrun/version.hpp"
