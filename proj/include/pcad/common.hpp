#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pcad {

/// File or filesystem problem (missing manifest, unreadable cloud file, ...).
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or other numerical breakdown that invalidates a run.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest decimal form that round-trips a double exactly.
std::string format_g17(double v);

/// FNV-1a over a byte range; used for checkpoint hashes and name-keyed seeds.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

} // namespace pcad
