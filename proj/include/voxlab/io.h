// voxlab/io.h

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

#ifndef VOXLAB_IO_H_
#define VOXLAB_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxlab/common.h"

namespace voxlab {

using Json = nlohmann::json;

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& p);
void write_file_bytes(const std::filesystem::path& p, const void* data,
                      size_t len);
std::string read_file_text(const std::filesystem::path& p);
void write_file_text(const std::filesystem::path& p, const std::string& text);

Json load_json_file(const std::filesystem::path& p);
void save_json_file(const std::filesystem::path& p, const Json& j);

// Binary container: magic line, u32 little-endian header length, JSON header,
// then raw payload sections. Used for codebooks, labels, and checkpoints.
struct BlobFile {
  Json header;
  std::vector<uint8_t> payload;
};
void write_blob(const std::filesystem::path& p, const std::string& magic,
                const Json& header, const void* payload, size_t payload_len);
BlobFile read_blob(const std::filesystem::path& p, const std::string& magic);

// Config field access with full-path error messages, e.g.
// "corpus.num_speakers: expected integer".
class JsonView {
 public:
  JsonView(const Json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  bool has(const std::string& key) const;
  JsonView at(const std::string& key) const;

  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& dflt) const;

  const Json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

 private:
  const Json* j_;
  std::string path_;
};

std::string hex64(uint64_t v);

// Decides the output directory for a command. If `out` does not exist it is
// created and returned. If it exists and is non-empty: with force, it is
// reused as-is; without force, a fresh timestamped sibling is created.
std::filesystem::path prepare_out_dir(const std::filesystem::path& out,
                                      bool force);

std::string git_describe();

}  // namespace voxlab

#endif  // VOXLAB_IO_H_
