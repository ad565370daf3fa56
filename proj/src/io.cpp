#include "qlink/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <iterator>
#include <stdexcept>

#include <openssl/evp.h>

namespace qlink::io {

namespace {

std::string to_hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 15]);
  }
  return s;
}

struct Record {
  std::int64_t t;
  std::uint8_t ch;
};

std::vector<Record> merged(std::span<const detect::DetectionEventStream> streams) {
  std::vector<Record> r;
  std::size_t n = 0;
  for (const auto& s : streams) n += s.size();
  r.reserve(n);
  for (const auto& s : streams)
    for (auto t : s.t_ps) r.push_back({t, s.channel});
  std::stable_sort(r.begin(), r.end(), [](const Record& a, const Record& b) {
    return a.t != b.t ? a.t < b.t : a.ch < b.ch;
  });
  return r;
}

void write_header(std::ofstream& out,
                  const std::vector<std::pair<std::string, std::string>>& header) {
  for (const auto& [k, v] : header) out << "# " << k << ": " << v << '\n';
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  return to_hex(md, len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sha256: cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return to_hex(md, len);
}

std::string format_double(double x) {
  std::array<char, 64> buf;
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), p);
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, std::string>>& header,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), n_cols_(columns.size()), path_(path) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  write_header(out_, header);
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void CsvWriter::sep() {
  if (col_ >= n_cols_) throw std::logic_error("CsvWriter: too many columns in " + path_.string());
  if (col_ > 0) out_ << ',';
  ++col_;
}

CsvWriter& CsvWriter::operator<<(double x) {
  sep();
  out_ << format_double(x);
  return *this;
}
CsvWriter& CsvWriter::operator<<(std::int64_t x) {
  sep();
  out_ << x;
  return *this;
}
CsvWriter& CsvWriter::operator<<(std::uint64_t x) {
  sep();
  out_ << x;
  return *this;
}
CsvWriter& CsvWriter::operator<<(const std::string& s) {
  sep();
  out_ << s;
  return *this;
}

void CsvWriter::end_row() {
  if (col_ != n_cols_) throw std::logic_error("CsvWriter: short row in " + path_.string());
  out_ << '\n';
  col_ = 0;
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw std::runtime_error("write failed: " + path_.string());
}

void write_events_binary(const std::filesystem::path& path,
                         std::span<const detect::DetectionEventStream> streams) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::vector<char> buf;
  const auto recs = merged(streams);
  buf.reserve(recs.size() * 9);
  for (const auto& r : recs) {
    buf.push_back(static_cast<char>(r.ch));
    const auto u = static_cast<std::uint64_t>(r.t);
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<detect::DetectionEventStream> read_events_binary(const std::filesystem::path& path,
                                                             double duration_s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() % 9 != 0) throw std::runtime_error("truncated event file " + path.string());
  std::vector<detect::DetectionEventStream> streams;
  std::array<int, 256> slot;
  slot.fill(-1);
  std::vector<std::uint8_t> channels;
  for (std::size_t i = 0; i < buf.size(); i += 9) channels.push_back(buf[i]);
  std::sort(channels.begin(), channels.end());
  channels.erase(std::unique(channels.begin(), channels.end()), channels.end());
  for (auto ch : channels) {
    slot[ch] = static_cast<int>(streams.size());
    streams.push_back({ch, duration_s, {}});
  }
  for (std::size_t i = 0; i < buf.size(); i += 9) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(buf[i + 1 + b]) << (8 * b);
    streams[slot[buf[i]]].t_ps.push_back(static_cast<std::int64_t>(u));
  }
  return streams;
}

void write_events_csv(const std::filesystem::path& path,
                      std::span<const detect::DetectionEventStream> streams,
                      const std::vector<std::pair<std::string, std::string>>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_header(out, header);
  out << "channel,timestamp_ps\n";
  for (const auto& r : merged(streams)) out << static_cast<int>(r.ch) << ',' << r.t << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_g2_csv(const std::filesystem::path& path, const detect::G2Histogram& hist,
                  const std::vector<std::pair<std::string, std::string>>& header) {
  CsvWriter w(path, header, {"dt_s", "g2", "sigma"});
  for (std::size_t i = 0; i < hist.size(); ++i) {
    w << hist.centers_s[i] << hist.g2[i] << hist.sigma[i];
    w.end_row();
  }
  w.close();
}

}  // namespace qlink::io
