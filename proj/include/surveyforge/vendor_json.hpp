#pragma once

// Single include point for the vendored nlohmann/json header so the vendor
// directory layout is referenced in exactly one place.
#include "json.hpp"
