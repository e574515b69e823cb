#pragma once

// nlohmann/json is vendored at the repository root (vendor/json.hpp).
#include <json.hpp>
