#pragma once

// File formats: CSV with a '#' header block, binary timestamp records,
// SHA-256 checksums.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qlink/detection.hpp"

namespace qlink::io {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form; identical on every run.
std::string format_double(double x);

class CsvWriter {
 public:
  /// Header lines are written as "# key: value" before the column row.
  CsvWriter(const std::filesystem::path& path,
            const std::vector<std::pair<std::string, std::string>>& header,
            const std::vector<std::string>& columns);

  CsvWriter& operator<<(double x);
  CsvWriter& operator<<(std::int64_t x);
  CsvWriter& operator<<(std::uint64_t x);
  CsvWriter& operator<<(const std::string& s);
  void end_row();
  void close();

 private:
  void sep();
  std::ofstream out_;
  std::size_t n_cols_;
  std::size_t col_ = 0;
  std::filesystem::path path_;
};

/// Records of (u8 channel, little-endian int64 picoseconds), merged over
/// all streams in time order (ties by channel).
void write_events_binary(const std::filesystem::path& path,
                         std::span<const detect::DetectionEventStream> streams);
/// Streams in increasing channel order; durations are set to `duration_s`.
std::vector<detect::DetectionEventStream> read_events_binary(const std::filesystem::path& path,
                                                             double duration_s);

/// Columns channel,timestamp_ps, same record order as the binary form.
void write_events_csv(const std::filesystem::path& path,
                      std::span<const detect::DetectionEventStream> streams,
                      const std::vector<std::pair<std::string, std::string>>& header);

/// Columns dt_s,g2,sigma.
void write_g2_csv(const std::filesystem::path& path, const detect::G2Histogram& hist,
                  const std::vector<std::pair<std::string, std::string>>& header);

}  // namespace qlink::io
