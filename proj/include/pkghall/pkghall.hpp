#pragma once

// Convenience umbrella: pulls in the whole library.

#include "pkghall/bk_tree.hpp"
#include "pkghall/classify.hpp"
#include "pkghall/config.hpp"
#include "pkghall/csv.hpp"
#include "pkghall/datasets.hpp"
#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/extraction.hpp"
#include "pkghall/gateway.hpp"
#include "pkghall/levenshtein.hpp"
#include "pkghall/metrics.hpp"
#include "pkghall/mitigation.hpp"
#include "pkghall/package_name.hpp"
#include "pkghall/params.hpp"
#include "pkghall/prompts.hpp"
#include "pkghall/registry.hpp"
#include "pkghall/registry_fetch.hpp"
#include "pkghall/reports.hpp"
#include "pkghall/retry.hpp"
#include "pkghall/run_store.hpp"
#include "pkghall/runner.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"
