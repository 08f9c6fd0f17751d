#include "deeplight/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "deeplight/error.hpp"

namespace deeplight::io {

namespace {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw InputError("cannot open for writing: " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void close() {
    out_.close();
    if (!out_) throw InputError("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path) {
    require_file(path);
    in_.open(path, std::ios::binary);
    if (!in_) throw InputError("cannot open: " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw InputError("truncated file: " + path_.string());
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  void magic(const char* expected) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, expected, 4) != 0) {
      throw InputError(std::string("not a ") + expected + " file: " + path_.string());
    }
  }
  bool at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

 private:
  fs::path path_;
  std::ifstream in_;
};

}  // namespace

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing file: " + path.string());
}

void write_vol1(const fs::path& path, const Volume4D& run) {
  Writer w(path);
  w.bytes("VOL1", 4);
  w.u32(static_cast<std::uint32_t>(run.shape.x));
  w.u32(static_cast<std::uint32_t>(run.shape.y));
  w.u32(static_cast<std::uint32_t>(run.shape.z));
  w.u32(static_cast<std::uint32_t>(run.timepoints));
  w.f32(static_cast<float>(run.voxel_mm));
  w.f32(static_cast<float>(run.tr_s));
  w.bytes(run.data.data(), run.data.size() * sizeof(float));
  w.close();
}

void write_vol1(const fs::path& path, const Volume3D& volume) {
  Volume4D run(volume.shape, 1, volume.voxel_mm, 0.0);
  for (std::size_t i = 0; i < volume.data.size(); ++i) run.data[i] = static_cast<float>(volume.data[i]);
  write_vol1(path, run);
}

Volume4D read_vol1(const fs::path& path) {
  Reader r(path);
  r.magic("VOL1");
  GridShape g;
  g.x = r.u32();
  g.y = r.u32();
  g.z = r.u32();
  const std::size_t t = r.u32();
  const double voxel = r.f32();
  const double tr = r.f32();
  Volume4D v(g, t, voxel, tr);
  r.bytes(v.data.data(), v.data.size() * sizeof(float));
  if (!r.at_end()) throw InputError("trailing bytes in " + path.string());
  return v;
}

Volume3D read_vol1_volume(const fs::path& path) {
  const Volume4D run = read_vol1(path);
  if (run.timepoints != 1) throw InputError("expected a single volume in " + path.string());
  return run.volume(0);
}

namespace {

void write_record(Writer& w, const std::string& name, const nn::Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

}  // namespace

void write_checkpoint(const fs::path& path, const model::DeepLightParams& params) {
  const auto& arch = params.arch;
  Writer w(path);
  w.bytes("DLP1", 4);
  w.u32(static_cast<std::uint32_t>(params.params.size() + 2));
  write_record(w, "arch.slice", nn::Tensor({2}, {static_cast<double>(arch.slice_x), static_cast<double>(arch.slice_y)}));
  std::vector<double> strides;
  for (const auto& l : arch.conv) strides.push_back(static_cast<double>(l.stride));
  const std::size_t layers = strides.size();
  write_record(w, "arch.strides", nn::Tensor({layers}, std::move(strides)));
  for (std::size_t i = 0; i < params.params.size(); ++i) write_record(w, params.params.name(i), params.params[i]);
  w.close();
}

model::DeepLightParams read_checkpoint(const fs::path& path) {
  Reader r(path);
  r.magic("DLP1");
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, nn::Tensor>> records;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t len = r.u32();
    if (len > 4096) throw InputError("corrupt record name in " + path.string());
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw InputError("corrupt tensor rank in " + path.string());
    nn::Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    nn::Tensor t(shape);
    for (double& v : t.data()) v = r.f32();
    records.emplace_back(std::move(name), std::move(t));
  }
  std::map<std::string, const nn::Tensor*> by_name;
  for (const auto& [n, t] : records) by_name[n] = &t;
  auto need = [&](const std::string& n) -> const nn::Tensor& {
    auto it = by_name.find(n);
    if (it == by_name.end()) throw InputError("checkpoint " + path.string() + " lacks '" + n + "'");
    return *it->second;
  };
  model::ArchSpec arch;
  const auto& slice = need("arch.slice");
  const auto& strides = need("arch.strides");
  arch.slice_x = static_cast<std::size_t>(slice[0]);
  arch.slice_y = static_cast<std::size_t>(slice[1]);
  for (std::size_t l = 0; l < strides.size(); ++l) {
    const auto& w = need("conv" + std::to_string(l + 1) + ".w");
    if (w.rank() != 4) throw InputError("malformed conv kernel in " + path.string());
    arch.kernel = w.dim(0);
    arch.conv.push_back({w.dim(3), static_cast<std::size_t>(strides[l])});
  }
  arch.lstm_units = need("lstm_fwd.W_f").dim(0);
  arch.classes = need("out.w").dim(0);
  model::DeepLightParams p = model::init_params(arch, 0);
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    const auto& t = need(p.params.name(i));
    if (t.shape() != p.params[i].shape()) {
      throw InputError("checkpoint tensor '" + p.params.name(i) + "' has shape " + nn::shape_string(t.shape()) +
                       ", expected " + nn::shape_string(p.params[i].shape()));
    }
    p.params[i] = t;
  }
  if (records.size() != p.params.size() + 2) throw InputError("unexpected records in checkpoint " + path.string());
  return p;
}

void write_pgm_montage(const fs::path& path, const Volume3D& v, double lo, double hi) {
  const GridShape g = v.shape;
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(g.z))));
  const std::size_t rows = (g.z + cols - 1) / cols;
  const std::size_t width = cols * g.x, height = rows * g.y;
  std::vector<unsigned char> img(width * height, 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t k = 0; k < g.z; ++k) {
    const std::size_t ox = (k % cols) * g.x, oy = (k / cols) * g.y;
    for (std::size_t j = 0; j < g.y; ++j)
      for (std::size_t i = 0; i < g.x; ++i) {
        const double s = std::clamp((v.at(i, j, k) - lo) / span, 0.0, 1.0);
        img[(oy + (g.y - 1 - j)) * width + ox + i] = static_cast<unsigned char>(std::lround(s * 255.0));
      }
  }
  Writer w(path);
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  w.bytes(header.data(), header.size());
  w.bytes(img.data(), img.size());
  w.close();
}

void write_pgm_montage(const fs::path& path, const Volume3D& volume) {
  double lo = 0.0, hi = 0.0;
  if (!volume.data.empty()) {
    const auto [mn, mx] = std::minmax_element(volume.data.begin(), volume.data.end());
    lo = *mn;
    hi = *mx;
  }
  write_pgm_montage(path, volume, lo, hi);
}

void write_text(const fs::path& path, const std::string& text) {
  Writer w(path);
  w.bytes(text.data(), text.size());
  w.close();
}

std::string read_text(const fs::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace deeplight::io
