// Checkpoint layout (all integers and doubles little-endian):
//
//   "CLRNCKPT"            8 bytes
//   version               u32 (= 1)
//   conditioning          u8
//   3 x network (G, F, D):
//     name                u32 length + bytes
//     head                u8
//     widths              u32 count + count x u64
//   parameters            u32 count, then per parameter:
//     name                u32 length + bytes
//     shape               u32 rank + rank x u64
//     values              product(shape) x f64
//   metadata              u32 length + bytes (resolved config JSON)

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "clarinet/data.hpp"
#include "clarinet/error.hpp"
#include "clarinet/models.hpp"

namespace clarinet::models {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'L', 'R', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), sizeof(T))) throw FormatError(path.string() + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1u << 28)) throw FormatError(path.string() + ": implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw FormatError(path.string() + ": truncated checkpoint");
  return s;
}

}  // namespace

class CheckpointAccess {
 public:
  static std::vector<ad::Parameter>& params(Mlp& m) { return m.params_; }
  static void reset(Mlp& m, std::string name, NetworkSpec spec) {
    m.name_ = std::move(name);
    m.spec_ = std::move(spec);
    m.params_.clear();
  }
};

void save_checkpoint(const NetworkTriplet& net, const std::filesystem::path& path, const std::string& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(net.conditioning));
  std::vector<const ad::Parameter*> all;
  for (const Mlp* m : {&net.g, &net.f, &net.d}) {
    put_string(out, m->name());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(m->spec().head));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m->spec().widths.size()));
    for (auto w : m->spec().widths) put<std::uint64_t>(out, w);
    for (const auto* p : m->parameters()) all.push_back(p);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(all.size()));
  for (const auto* p : all) {
    put_string(out, p->name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.shape().size()));
    for (auto d : p->value.shape()) put<std::uint64_t>(out, d);
    for (double v : p->value.values()) put<double>(out, v);
  }
  put_string(out, metadata);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

NetworkTriplet load_checkpoint(const std::filesystem::path& path, std::string* metadata) {
  auto in = data::open_read(path, true);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError(path.string() + ": not a checkpoint");
  if (const auto v = get<std::uint32_t>(in, path); v != kVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  NetworkTriplet net;
  net.conditioning = static_cast<Conditioning>(get<std::uint8_t>(in, path));
  for (Mlp* m : {&net.g, &net.f, &net.d}) {
    auto name = get_string(in, path);
    NetworkSpec spec;
    spec.head = static_cast<Head>(get<std::uint8_t>(in, path));
    const auto n = get<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n; ++i) spec.widths.push_back(get<std::uint64_t>(in, path));
    CheckpointAccess::reset(*m, std::move(name), std::move(spec));
  }
  const auto count = get<std::uint32_t>(in, path);
  std::vector<ad::Parameter> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_string(in, path);
    const auto rank = get<std::uint32_t>(in, path);
    std::vector<std::size_t> shape;
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(get<std::uint64_t>(in, path));
      total *= shape.back();
    }
    std::vector<double> values(total);
    for (auto& v : values) v = get<double>(in, path);
    loaded.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  std::size_t next = 0;
  for (Mlp* m : {&net.g, &net.f, &net.d}) {
    const auto layers = m->spec().widths.size() - 1;
    auto& params = CheckpointAccess::params(*m);
    params.reserve(2 * layers);
    for (std::size_t l = 0; l < layers; ++l) {
      for (int k = 0; k < 2; ++k) {
        if (next >= loaded.size()) throw FormatError(path.string() + ": too few parameters");
        const auto& w = m->spec().widths;
        const std::vector<std::size_t> expect =
            k == 0 ? std::vector<std::size_t>{w[l], w[l + 1]} : std::vector<std::size_t>{1, w[l + 1]};
        if (loaded[next].value.shape() != expect) {
          throw FormatError(path.string() + ": parameter '" + loaded[next].name + "' has shape " +
                            shape_string(loaded[next].value.shape()) + ", expected " + shape_string(expect));
        }
        params.push_back(std::move(loaded[next++]));
      }
    }
  }
  if (next != loaded.size()) throw FormatError(path.string() + ": unexpected extra parameters");
  auto meta = get_string(in, path);
  if (metadata) *metadata = std::move(meta);
  return net;
}

}  // namespace clarinet::models
