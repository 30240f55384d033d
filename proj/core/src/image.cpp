#include "affect/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "affect/errors.hpp"

namespace affect {

Tensor Image::to_tensor() const {
  return Tensor::from_vector({height, width, channels}, pixels);
}

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("image tensor must be [h x w x c], got " + shape_str(t.shape()));
  Image img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.channels = t.dim(2);
  img.pixels.assign(t.data().begin(), t.data().end());
  return img;
}

namespace {

// Next whitespace-delimited header token, skipping # comments.
std::string header_token(std::istream& in, const std::string& file) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  if (tok.empty()) throw ParseError(file, 1, "truncated PNM header");
  return tok;
}

std::size_t header_number(std::istream& in, const std::string& file) {
  auto tok = header_token(in, file);
  try {
    return std::stoul(tok);
  } catch (const std::exception&) {
    throw ParseError(file, 1, "bad PNM header field '" + tok + "'");
  }
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + file);
  std::string magic = header_token(in, file);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw ParseError(file, 1, "unsupported image format '" + magic + "' (need P5 or P6)");
  }
  img.width = header_number(in, file);
  img.height = header_number(in, file);
  std::size_t maxval = header_number(in, file);
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 255) {
    throw ParseError(file, 1, "unsupported PNM dimensions or maxval");
  }
  std::vector<unsigned char> raw(img.width * img.height * img.channels);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IoError("truncated pixel data in " + file);
  }
  img.pixels.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    img.pixels[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ContractError("PNM output needs 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = std::clamp(image.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::pair<std::string, Image>> load_image_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, Image>> out;
  out.reserve(files.size());
  for (const auto& f : files) out.emplace_back(f.filename().string(), read_pnm(f));
  return out;
}

}  // namespace affect
