#pragma once

#include <functional>
#include <string>

namespace iclopt {

/// Produces ISO-8601 UTC timestamps for audit records.
using Clock = std::function<std::string()>;

Clock wall_clock();

/// Deterministic clock: 1970-01-01T00:00:00Z, then one second later per call.
/// Used with scripted backends so reruns produce byte-identical logs.
Clock logical_clock();

}  // namespace iclopt
