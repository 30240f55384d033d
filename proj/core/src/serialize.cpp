#include "affect/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "affect/errors.hpp"

namespace affect {

namespace {

constexpr const char* kCheckpointMagic = "affect-checkpoint v1";
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated tensor blob");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw IoError("failed writing tensor blob");
}

Tensor read_tensor(std::istream& in) {
  std::uint32_t rank = get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw IoError("tensor blob has invalid rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = get_u32(in);
    if (e == 0) throw IoError("tensor blob has a zero extent");
  }
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  return Tensor::from_vector(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_tensor(in);
}

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    kv.set(key, trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in, path.string());
}

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

void KeyValues::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValues::set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }

bool KeyValues::contains(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](auto& e) { return e.first == key; });
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw ConfigError("missing config key '" + key + "'");
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
  return contains(key) ? get(key) : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  if (!contains(key)) return fallback;
  const auto& s = get(key);
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  }
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
  if (!contains(key)) return fallback;
  const auto& s = get(key);
  try {
    std::size_t used = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
    auto v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not a non-negative integer");
  }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  if (!contains(key)) return fallback;
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<std::size_t> KeyValues::get_size_list(const std::string& key,
                                                  std::vector<std::size_t> fallback) const {
  if (!contains(key)) return fallback;
  std::vector<std::size_t> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    KeyValues one;
    one.set(key, item);
    out.push_back(one.get_size(key, 0));
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

void KeyValues::write(std::ostream& out) const {
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
}

std::string KeyValues::str() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

Checkpoint Checkpoint::capture(const nn::Module& model, KeyValues header) {
  Checkpoint ck;
  ck.header = std::move(header);
  for (const auto& p : model.parameters()) ck.tensors.push_back(p.detach());
  return ck;
}

void Checkpoint::restore(const nn::Module& model) const {
  auto params = model.named_parameters();
  if (params.size() != tensors.size()) {
    throw ContractError("checkpoint holds " + std::to_string(tensors.size()) +
                        " tensors, model declares " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, p] = params[i];
    if (p.shape() != tensors[i].shape()) {
      throw ShapeError("checkpoint tensor #" + std::to_string(i) + " " +
                       shape_str(tensors[i].shape()) + " does not fit parameter '" + name +
                       "' " + shape_str(p.shape()));
    }
    auto src = tensors[i].data();
    std::copy(src.begin(), src.end(), p.mutable_data().begin());
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kCheckpointMagic << '\n';
  header.write(out);
  out << "tensors=" << tensors.size() << '\n' << "end_header\n";
  for (const auto& t : tensors) write_tensor(out, t);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw ParseError(path.string(), 1, "not an affect checkpoint");
  }
  std::stringstream header_text;
  std::size_t lineno = 1;
  while (true) {
    if (!std::getline(in, line)) throw ParseError(path.string(), lineno, "missing end_header");
    ++lineno;
    if (line == "end_header") break;
    header_text << line << '\n';
  }
  Checkpoint ck;
  ck.header = KeyValues::parse(header_text, path.string());
  std::size_t count = ck.header.get_size("tensors", 0);
  for (std::size_t i = 0; i < count; ++i) ck.tensors.push_back(read_tensor(in));
  return ck;
}

}  // namespace affect
