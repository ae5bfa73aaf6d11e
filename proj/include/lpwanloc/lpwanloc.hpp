// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lpwanloc/channel/channel.hpp"
#include "lpwanloc/channel/rng.hpp"
#include "lpwanloc/channel/scenario.hpp"
#include "lpwanloc/classify/dtree.hpp"
#include "lpwanloc/classify/evaluate.hpp"
#include "lpwanloc/classify/kernel.hpp"
#include "lpwanloc/classify/svm.hpp"
#include "lpwanloc/core/fingerprint.hpp"
#include "lpwanloc/core/types.hpp"
#include "lpwanloc/error.hpp"
#include "lpwanloc/harness/csv.hpp"
#include "lpwanloc/harness/experiment.hpp"
#include "lpwanloc/harness/fixtures.hpp"
#include "lpwanloc/harness/ingest.hpp"
#include "lpwanloc/harness/report.hpp"
#include "lpwanloc/harness/scenario_spec.hpp"
#include "lpwanloc/parallel.hpp"
#include "lpwanloc/ranging/cdf.hpp"
#include "lpwanloc/ranging/multilateration.hpp"
#include "lpwanloc/ranging/regression.hpp"
#include "lpwanloc/version.hpp"
