// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <regex>
#include <set>

#include "gnet/archive.hpp"
#include "gnet/random.hpp"

#ifdef GNET_HAVE_PNG
#include <png.h>
#endif
#ifdef GNET_HAVE_JPEG
#include <csetjmp>
#include <jpeglib.h>
#endif

namespace gnet {

const char* to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Query:
      return "query";
    case Split::Gallery:
      return "gallery";
  }
  return "?";
}

SplitCounts count_split(const std::vector<ReidSample>& samples) {
  SplitCounts c;
  std::set<int> ids, cams;
  for (const auto& s : samples) {
    ++c.images;
    if (s.distractor()) {
      ++c.distractors;
    } else {
      ids.insert(s.person_id);
    }
    cams.insert(s.camera_id);
  }
  c.identities = ids.size();
  c.cameras = cams.size();
  return c;
}

MarketName parse_market_filename(std::string_view filename) {
  static const std::regex pattern(R"(^(-?[0-9]+)_c([0-9]+)(s[0-9]+)?(_.*)?\.[A-Za-z]+$)");
  const std::string name(filename);
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) {
    throw DatasetError("cannot parse person/camera from file name '" + name + "'");
  }
  MarketName out;
  try {
    out.person_id = std::stoi(m[1].str());
    out.camera_id = std::stoi(m[2].str());
  } catch (const std::exception&) {
    throw DatasetError("id out of range in file name '" + name + "'");
  }
  if (out.person_id < -1) throw DatasetError("negative person id other than -1 in '" + name + "'");
  if (out.camera_id < 1) throw DatasetError("camera id must be >= 1 in '" + name + "'");
  return out;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".ppm" || ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

namespace {

std::vector<ReidSample> ingest_dir(const std::filesystem::path& dir, Split split) {
  if (!std::filesystem::is_directory(dir)) throw DatasetError("missing dataset directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ReidSample> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    MarketName parsed;
    try {
      parsed = parse_market_filename(name);
    } catch (const DatasetError& e) {
      throw DatasetError(std::string(e.what()) + " in " + dir.string());
    }
    ReidSample s;
    s.name = name;
    s.path = f;
    s.person_id = parsed.person_id;
    s.camera_id = parsed.camera_id;
    s.split = split;
    out.push_back(std::move(s));
  }
  return out;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

struct IdentityLook {
  std::array<double, 3> top;
  std::array<double, 3> bottom;
  double period;
  int orientation;  // 0 horizontal, 1 vertical, 2 diagonal stripes
};

IdentityLook make_look(std::uint64_t seed, std::size_t id) {
  std::mt19937_64 rng(derive_seed({seed, 1, id}));
  IdentityLook look;
  const double hue = std::fmod(static_cast<double>(id) * 0.6180339887 + 0.1 * uniform01(rng), 1.0);
  look.top = hsv_to_rgb(hue, uniform(rng, 0.55, 0.9), uniform(rng, 0.55, 0.95));
  look.bottom = hsv_to_rgb(hue + uniform(rng, 0.3, 0.7), uniform(rng, 0.4, 0.9), uniform(rng, 0.3, 0.8));
  look.period = uniform(rng, 8.0, 28.0);
  look.orientation = static_cast<int>(uniform_index(rng, 3));
  return look;
}

Tensor render_sample(const IdentityLook& look, int camera, std::uint64_t sample_seed, std::size_t height,
                     std::size_t width) {
  std::mt19937_64 rng(sample_seed);
  const double sy = static_cast<double>(height) / 384.0, sx = static_cast<double>(width) / 192.0;
  const long dx = std::lround(uniform(rng, -12, 12) * sx);
  const long dy = std::lround(uniform(rng, -12, 12) * sy);
  const double bg_level = uniform(rng, 0.25, 0.65);
  const std::array<double, 3> bg{bg_level + uniform(rng, -0.05, 0.05), bg_level + uniform(rng, -0.05, 0.05),
                                 bg_level + uniform(rng, -0.05, 0.05)};
  std::array<double, 3> gain, offset;
  for (int c = 0; c < 3; ++c) {
    gain[c] = 1.0 + 0.2 * std::sin(1.7 * camera + 2.1 * c);
    offset[c] = 0.06 * std::cos(2.3 * camera + c);
  }
  const auto h = static_cast<long>(height), w = static_cast<long>(width);
  const long head0 = std::lround(0.05 * h) + dy, head1 = std::lround(0.16 * h) + dy;
  const long top1 = std::lround(0.52 * h) + dy, leg1 = std::lround(0.93 * h) + dy;
  const long body_l = w / 4 + dx, body_r = 3 * w / 4 + dx;
  const long head_l = w * 3 / 8 + dx, head_r = w * 5 / 8 + dx;
  const std::array<double, 3> skin{0.85, 0.68, 0.52};
  const double two_pi = 6.283185307179586;

  Tensor img({1, 3, height, width});
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      std::array<double, 3> base = bg;
      const bool in_body = x >= body_l && x < body_r;
      if (y >= head0 && y < head1 && x >= head_l && x < head_r) {
        base = skin;
      } else if (in_body && y >= head1 && y < leg1) {
        const bool top = y < top1;
        const auto& col = top ? look.top : look.bottom;
        const double coord = look.orientation == 0 ? static_cast<double>(y) / sy
                             : look.orientation == 1 ? static_cast<double>(x) / sx
                                                     : static_cast<double>(x) / sx + static_cast<double>(y) / sy;
        const double stripe = std::sin(two_pi * coord / look.period) > 0 ? 0.12 : -0.12;
        for (int c = 0; c < 3; ++c) base[c] = col[c] + (top ? stripe : 0.5 * stripe);
      }
      for (int c = 0; c < 3; ++c) {
        const double noise = uniform(rng, -0.04, 0.04);
        img.at(0, static_cast<std::size_t>(c), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            clamp01(gain[c] * base[c] + offset[c] + noise);
      }
    }
  }
  return std::move(img).reshaped({3, height, width});
}

}  // namespace

ReidDataset ingest_market_layout(const std::filesystem::path& root) {
  ReidDataset d;
  d.train = ingest_dir(root / "bounding_box_train", Split::Train);
  d.query = ingest_dir(root / "query", Split::Query);
  d.gallery = ingest_dir(root / "bounding_box_test", Split::Gallery);
  for (const auto& s : d.train) {
    if (s.distractor()) throw DatasetError("training image " + s.name + " has the distractor id -1");
  }
  return d;
}

ReidDataset ingest_split_file(const std::filesystem::path& root, const std::filesystem::path& split_file) {
  std::ifstream in(split_file);
  if (!in) throw DatasetError("cannot read split file " + split_file.string());
  ReidDataset d;
  std::vector<std::pair<std::filesystem::path, Split>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const std::string where = split_file.string() + ":" + std::to_string(line_no) + ": ";
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw DatasetError(where + "expected '<split> <relative path>'");
    const std::string tag = line.substr(0, sp);
    const std::filesystem::path rel = line.substr(sp + 1);
    Split split;
    if (tag == "train") {
      split = Split::Train;
    } else if (tag == "query") {
      split = Split::Query;
    } else if (tag == "gallery") {
      split = Split::Gallery;
    } else {
      throw DatasetError(where + "unknown split '" + tag + "'");
    }
    if (rel.empty() || rel.is_absolute()) throw DatasetError(where + "path must be relative to the dataset root");
    entries.emplace_back(rel, split);
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& [rel, split] : entries) {
    const std::string name = rel.filename().string();
    const MarketName parsed = parse_market_filename(name);
    ReidSample s;
    s.name = rel.generic_string();
    s.path = root / rel;
    if (!std::filesystem::is_regular_file(s.path)) throw DatasetError("split file lists missing image " + s.path.string());
    s.person_id = parsed.person_id;
    s.camera_id = parsed.camera_id;
    s.split = split;
    (split == Split::Train ? d.train : split == Split::Query ? d.query : d.gallery).push_back(std::move(s));
  }
  for (const auto& s : d.train) {
    if (s.distractor()) throw DatasetError("training image " + s.name + " has the distractor id -1");
  }
  return d;
}

ReidDataset synth_dataset(std::size_t num_ids, std::size_t per_id, std::size_t cameras, std::uint64_t seed,
                          std::size_t height, std::size_t width) {
  if (num_ids < 2) throw std::invalid_argument("synthetic dataset needs at least 2 identities");
  if (per_id < 2) throw std::invalid_argument("synthetic dataset needs at least 2 images per identity");
  if (cameras < 2) throw std::invalid_argument("synthetic dataset needs at least 2 cameras");
  if (height < 8 || width < 8) throw std::invalid_argument("synthetic images must be at least 8x8");
  ReidDataset d;
  const std::size_t train_count = per_id / 2;
  for (std::size_t id = 0; id < num_ids; ++id) {
    const IdentityLook look = make_look(seed, id);
    for (std::size_t j = 0; j < per_id; ++j) {
      ReidSample s;
      s.person_id = static_cast<int>(id + 1);
      s.camera_id = static_cast<int>(j % cameras + 1);
      char name[64];
      std::snprintf(name, sizeof name, "%04d_c%ds1_%06zu_00.ppm", s.person_id, s.camera_id, j);
      s.name = name;
      s.pixels = render_sample(look, s.camera_id, derive_seed({seed, 2, id, j}), height, width);
      if (j < train_count) {
        s.split = Split::Train;
        d.train.push_back(std::move(s));
      } else if (j == train_count) {
        s.split = Split::Query;
        d.query.push_back(std::move(s));
      } else {
        s.split = Split::Gallery;
        d.gallery.push_back(std::move(s));
      }
    }
  }
  return d;
}

void write_market_layout(const ReidDataset& data, const std::filesystem::path& root) {
  const std::pair<const std::vector<ReidSample>*, const char*> parts[] = {
      {&data.train, "bounding_box_train"}, {&data.query, "query"}, {&data.gallery, "bounding_box_test"}};
  for (const auto& [samples, dir] : parts) {
    std::filesystem::create_directories(root / dir);
    for (const auto& s : *samples) {
      if (s.pixels.empty()) throw DatasetError("sample " + s.name + " has no pixels to write");
      write_ppm(root / dir / s.name, s.pixels);
    }
  }
}

// ---------------------------------------------------------------- images

namespace {

Tensor from_rgb8(const unsigned char* rgb, std::size_t height, std::size_t width) {
  Tensor img({3, height, width});
  const std::size_t plane = height * width;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) img[c * plane + i] = static_cast<float>(rgb[3 * i + c]) / 255.0f;
  return img;
}

Tensor decode_ppm(const std::string& bytes, const std::string& what) {
  std::size_t pos = 2;
  const auto next_number = [&]() -> std::size_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) throw DatasetError("PPM header value too large in " + what);
      ++pos;
    }
    if (pos == start) throw DatasetError("malformed PPM header in " + what);
    return v;
  };
  const std::size_t width = next_number();
  const std::size_t height = next_number();
  const std::size_t maxval = next_number();
  if (width == 0 || height == 0) throw DatasetError("empty PPM image " + what);
  if (maxval != 255) throw DatasetError("only 8-bit PPM (maxval 255) is supported: " + what);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw DatasetError("malformed PPM header in " + what);
  ++pos;
  if (bytes.size() - pos < width * height * 3) throw DatasetError("truncated PPM data in " + what);
  return from_rgb8(reinterpret_cast<const unsigned char*>(bytes.data() + pos), height, width);
}

#ifdef GNET_HAVE_PNG
Tensor decode_png(const std::string& bytes, const std::string& what) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DatasetError("cannot decode PNG " + what + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DatasetError("cannot decode PNG " + what + ": " + image.message);
  }
  return from_rgb8(rgb.data(), image.height, image.width);
}
#endif

#ifdef GNET_HAVE_JPEG
struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Tensor decode_jpeg(const std::string& bytes, const std::string& what) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  std::vector<unsigned char> rgb;
  std::size_t width = 0, height = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DatasetError("cannot decode JPEG " + what + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  rgb.resize(width * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_rgb8(rgb.data(), height, width);
}
#endif

}  // namespace

bool png_supported() {
#ifdef GNET_HAVE_PNG
  return true;
#else
  return false;
#endif
}

bool jpeg_supported() {
#ifdef GNET_HAVE_JPEG
  return true;
#else
  return false;
#endif
}

Tensor read_image(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const std::exception& e) {
    throw DatasetError(std::string("cannot read image: ") + e.what());
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, what);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) {
#ifdef GNET_HAVE_PNG
    return decode_png(bytes, what);
#else
    throw DatasetError("PNG support not built in; cannot read " + what);
#endif
  }
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF && static_cast<unsigned char>(bytes[1]) == 0xD8) {
#ifdef GNET_HAVE_JPEG
    return decode_jpeg(bytes, what);
#else
    throw DatasetError("JPEG support not built in; cannot read " + what);
#endif
  }
  throw DatasetError("unrecognized image format: " + what);
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("write_ppm", "channels", "expected 3×H×W");
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + plane * 3);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image[c * plane + i], 0.0f, 1.0f);
      out[header + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
  write_file_atomic(path, out);
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw DimensionError("resize_bilinear", "rank", "expected C×H×W");
  if (height == 0 || width == 0) throw DimensionError("resize_bilinear", "size", "target size must be positive");
  const std::size_t ch = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  if (ih == height && iw == width) return image;
  Tensor out({ch, height, width});
  const auto axis = [](std::size_t out_i, std::size_t in_n, std::size_t out_n, std::size_t& i0, std::size_t& i1,
                       float& frac) {
    double src = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<std::size_t>(src);
    i1 = std::min(i0 + 1, in_n - 1);
    frac = static_cast<float>(src - static_cast<double>(i0));
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    float fy;
    axis(y, ih, height, y0, y1, fy);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      float fx;
      axis(x, iw, width, x0, x1, fx);
      for (std::size_t c = 0; c < ch; ++c) {
        const float* p = image.data() + c * ih * iw;
        const float top = p[y0 * iw + x0] * (1 - fx) + p[y0 * iw + x1] * fx;
        const float bot = p[y1 * iw + x0] * (1 - fx) + p[y1 * iw + x1] * fx;
        out[(c * height + y) * width + x] = top * (1 - fy) + bot * fy;
      }
    }
  }
  return out;
}

Tensor load_sample(const ReidSample& sample, std::size_t height, std::size_t width) {
  if (!sample.pixels.empty()) return resize_bilinear(sample.pixels, height, width);
  if (sample.path.empty()) throw DatasetError("sample " + sample.name + " has neither pixels nor a path");
  return resize_bilinear(read_image(sample.path), height, width);
}

void normalize_inplace(Tensor& image, const Normalization& norm) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("normalize", "channels", "expected 3×H×W");
  const std::size_t plane = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = image.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - norm.mean[c]) / norm.stddev[c];
  }
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images needs at least one image");
  const Shape& s = images.front().shape();
  if (s.size() != 3) throw DimensionError("stack_images", "rank", "expected 3×H×W images");
  Tensor out({images.size(), s[0], s[1], s[2]});
  const std::size_t vol = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw DimensionError("stack_images", "shape", "images differ in size");
    std::copy_n(images[i].data(), vol, out.data() + i * vol);
  }
  return out;
}

}  // namespace gnet
