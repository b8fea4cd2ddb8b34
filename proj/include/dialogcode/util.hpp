#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dialogcode {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Lowercases and collapses whitespace runs to one space.
std::string normalize_label_text(std::string_view s);

std::string sha256_hex(std::string_view data);

// Deterministic 64-bit seed derived from arbitrary text.
std::uint64_t stable_seed(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

// Writes through a temporary file and renames, so readers never see a torn file.
void write_text_file_atomic(const std::filesystem::path& path,
                            std::string_view content);

// CSV cell quoting: cells holding a comma, quote, backslash or newline are
// wrapped in quotes with backslash escapes. split_csv_line reverses it and
// throws MalformedDocumentError on a bad escape.
std::string csv_quote(std::string_view cell);
std::vector<std::string> split_csv_line(const std::string& line, std::string_view where = "csv");

// Uniform integer in [0, bound) from raw 64-bit engine output. Unlike
// std::uniform_int_distribution the result is identical across standard
// library implementations.
template <class Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % bound;
}

template <class Engine>
double uniform_unit(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

}  // namespace dialogcode
