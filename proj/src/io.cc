// voxlab/io.cc

// Copyright 2026  The voxlab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "voxlab/io.h"

#include <cstdio>
#include <ctime>
#include <fstream>

namespace voxlab {

namespace fs = std::filesystem;

std::vector<uint8_t> read_file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  VOXLAB_REQUIRE(in.good(), IoError, "cannot open " << p.string());
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> buf(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(buf.data()), len);
  VOXLAB_REQUIRE(in.good(), IoError, "short read from " << p.string());
  return buf;
}

void write_file_bytes(const fs::path& p, const void* data, size_t len) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  VOXLAB_REQUIRE(out.good(), IoError, "cannot open " << p.string() << " for writing");
  if (len > 0) out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  out.flush();
  VOXLAB_REQUIRE(out.good(), IoError, "short write to " << p.string());
}

std::string read_file_text(const fs::path& p) {
  auto bytes = read_file_bytes(p);
  return std::string(bytes.begin(), bytes.end());
}

void write_file_text(const fs::path& p, const std::string& text) {
  write_file_bytes(p, text.data(), text.size());
}

Json load_json_file(const fs::path& p) {
  const std::string text = read_file_text(p);
  Json j = Json::parse(text, nullptr, false);
  VOXLAB_REQUIRE(!j.is_discarded(), ConfigError,
                 p.string() << ": not valid JSON");
  return j;
}

void save_json_file(const fs::path& p, const Json& j) {
  write_file_text(p, j.dump(2) + "\n");
}

void write_blob(const fs::path& p, const std::string& magic, const Json& header,
                const void* payload, size_t payload_len) {
  const std::string head = header.dump();
  std::vector<uint8_t> buf;
  buf.reserve(magic.size() + 1 + 4 + head.size() + payload_len);
  buf.insert(buf.end(), magic.begin(), magic.end());
  buf.push_back('\n');
  const uint32_t hlen = static_cast<uint32_t>(head.size());
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((hlen >> (8 * i)) & 0xff));
  buf.insert(buf.end(), head.begin(), head.end());
  const auto* pl = static_cast<const uint8_t*>(payload);
  buf.insert(buf.end(), pl, pl + payload_len);
  write_file_bytes(p, buf.data(), buf.size());
}

BlobFile read_blob(const fs::path& p, const std::string& magic) {
  const auto buf = read_file_bytes(p);
  const size_t msize = magic.size() + 1;
  VOXLAB_REQUIRE(buf.size() >= msize + 4, IoError, p.string() << ": truncated file");
  VOXLAB_REQUIRE(std::equal(magic.begin(), magic.end(), buf.begin()) &&
                     buf[magic.size()] == '\n',
                 IoError, p.string() << ": bad magic, expected " << magic);
  uint32_t hlen = 0;
  for (int i = 0; i < 4; ++i) hlen |= static_cast<uint32_t>(buf[msize + i]) << (8 * i);
  VOXLAB_REQUIRE(buf.size() >= msize + 4 + hlen, IoError, p.string() << ": truncated header");
  const std::string head(buf.begin() + static_cast<std::ptrdiff_t>(msize + 4),
                         buf.begin() + static_cast<std::ptrdiff_t>(msize + 4 + hlen));
  BlobFile out;
  out.header = Json::parse(head, nullptr, false);
  VOXLAB_REQUIRE(!out.header.is_discarded(), IoError, p.string() << ": bad JSON header");
  out.payload.assign(buf.begin() + static_cast<std::ptrdiff_t>(msize + 4 + hlen), buf.end());
  return out;
}

bool JsonView::has(const std::string& key) const { return j_->contains(key); }

JsonView JsonView::at(const std::string& key) const {
  VOXLAB_REQUIRE(j_->contains(key), ConfigError,
                 path_ << "." << key << ": missing required field");
  return JsonView((*j_)[key], path_ + "." + key);
}

int64_t JsonView::get_int(const std::string& key) const {
  VOXLAB_REQUIRE(j_->contains(key), ConfigError,
                 path_ << "." << key << ": missing required field");
  const Json& v = (*j_)[key];
  VOXLAB_REQUIRE(v.is_number_integer(), ConfigError,
                 path_ << "." << key << ": expected integer");
  return v.get<int64_t>();
}

int64_t JsonView::get_int(const std::string& key, int64_t dflt) const {
  if (!j_->contains(key)) return dflt;
  return get_int(key);
}

double JsonView::get_double(const std::string& key) const {
  VOXLAB_REQUIRE(j_->contains(key), ConfigError,
                 path_ << "." << key << ": missing required field");
  const Json& v = (*j_)[key];
  VOXLAB_REQUIRE(v.is_number(), ConfigError,
                 path_ << "." << key << ": expected number");
  return v.get<double>();
}

double JsonView::get_double(const std::string& key, double dflt) const {
  if (!j_->contains(key)) return dflt;
  return get_double(key);
}

bool JsonView::get_bool(const std::string& key, bool dflt) const {
  if (!j_->contains(key)) return dflt;
  const Json& v = (*j_)[key];
  VOXLAB_REQUIRE(v.is_boolean(), ConfigError,
                 path_ << "." << key << ": expected boolean");
  return v.get<bool>();
}

std::string JsonView::get_string(const std::string& key) const {
  VOXLAB_REQUIRE(j_->contains(key), ConfigError,
                 path_ << "." << key << ": missing required field");
  const Json& v = (*j_)[key];
  VOXLAB_REQUIRE(v.is_string(), ConfigError,
                 path_ << "." << key << ": expected string");
  return v.get<std::string>();
}

std::string JsonView::get_string(const std::string& key,
                                 const std::string& dflt) const {
  if (!j_->contains(key)) return dflt;
  return get_string(key);
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

fs::path prepare_out_dir(const fs::path& out, bool force) {
  if (!fs::exists(out)) {
    fs::create_directories(out);
    return out;
  }
  const bool empty = fs::is_directory(out) && fs::is_empty(out);
  if (empty || force) {
    fs::create_directories(out);
    return out;
  }
  // Never overwrite existing results: pick a timestamped sibling.
  std::time_t now = std::time(nullptr);
  std::tm tmv{};
  gmtime_r(&now, &tmv);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tmv);
  fs::path candidate = out;
  candidate += std::string("-") + stamp;
  int k = 0;
  while (fs::exists(candidate)) {
    candidate = out;
    candidate += std::string("-") + stamp + "-" + std::to_string(++k);
  }
  fs::create_directories(candidate);
  return candidate;
}

std::string git_describe() {
  FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
  if (pipe == nullptr) return "unknown";
  char buf[256];
  std::string out;
  while (fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
  pclose(pipe);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

}  // namespace voxlab
