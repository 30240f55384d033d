#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "affect/nn.hpp"
#include "affect/tensor.hpp"

namespace affect {

// Tensor blob: u32 rank, rank x u32 extents, then float32 values, all
// little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Ordered key=value text block.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& source = "<stream>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::size_t value);
  bool contains(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         std::vector<std::size_t> fallback) const;
  // Overlays every entry of other onto this one.
  void merge(const KeyValues& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  void write(std::ostream& out) const;
  std::string str() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Checkpoint file: magic line, key=value header, an "end_header" line, then
// tensor blobs in parameter declaration order.
struct Checkpoint {
  KeyValues header;
  std::vector<Tensor> tensors;

  static Checkpoint capture(const nn::Module& model, KeyValues header);
  // Copies values into the model's parameters; shapes must match exactly.
  void restore(const nn::Module& model) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace affect
