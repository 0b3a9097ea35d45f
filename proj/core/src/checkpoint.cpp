#include "zotune/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "zotune/error.hpp"
#include "zotune/rng.hpp"

namespace zotune {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'Z', 'O', 'T', 'C', 'K', 'P', 'T', '\x01'};
constexpr std::uint32_t kKindParams = 0;
constexpr std::uint32_t kKindAnchor = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_str(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw StructuralError("checkpoint truncated");
  return value;
}

std::string get_str(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 20)) throw StructuralError("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw StructuralError("checkpoint truncated");
  return s;
}

Role get_role(std::istream& in) {
  const auto raw = get<std::uint8_t>(in);
  if (raw > static_cast<std::uint8_t>(Role::Other)) {
    throw StructuralError(fmt::format("checkpoint has invalid role tag {}", raw));
  }
  return static_cast<Role>(raw);
}

void write_header(std::ostream& out, std::uint32_t kind, std::uint64_t total_dim,
                  const std::vector<Role>& roles, std::uint32_t layer_count) {
  out.write(kMagic, sizeof(kMagic));
  put(out, kind);
  put_str(out, kRngAlgorithm);
  put(out, total_dim);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(roles.size()));
  for (Role r : roles) put(out, static_cast<std::uint8_t>(r));
  put(out, layer_count);
}

struct Header {
  std::uint32_t kind = 0;
  std::uint64_t total_dim = 0;
  std::vector<Role> roles;
  std::uint32_t layer_count = 0;
};

Header read_header(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw StructuralError("not a zotune checkpoint (bad magic)");
  }
  Header h;
  h.kind = get<std::uint32_t>(in);
  const auto rng = get_str(in);
  if (rng != kRngAlgorithm) {
    throw StructuralError(fmt::format("checkpoint written with RNG '{}', this build uses '{}'",
                                      rng, kRngAlgorithm));
  }
  h.total_dim = get<std::uint64_t>(in);
  const auto n_roles = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_roles; ++i) h.roles.push_back(get_role(in));
  h.layer_count = get<std::uint32_t>(in);
  return h;
}

void write_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw StructuralError("checkpoint truncated");
}

template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(fmt::format("cannot open '{}' for writing", tmp.string()));
    writer(out);
    out.flush();
    if (!out) throw Error(fmt::format("failed writing '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return in;
}

}  // namespace

void write_params(std::ostream& out, const ParamSet& params) {
  write_header(out, kKindParams, params.total_dim(), {},
               static_cast<std::uint32_t>(params.layer_count()));
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    const auto& spec = params.spec(i);
    put_str(out, spec.name);
    put(out, static_cast<std::uint8_t>(spec.role));
    put<std::uint64_t>(out, spec.dim);
    put(out, static_cast<std::uint8_t>(AnchorPrecision::F64));
    write_doubles(out, params.values(i));
  }
}

ParamSet read_params(std::istream& in) {
  const auto header = read_header(in);
  if (header.kind != kKindParams) throw StructuralError("checkpoint does not hold parameters");
  std::vector<LayerSpec> specs;
  std::vector<std::vector<double>> blocks;
  for (std::uint32_t i = 0; i < header.layer_count; ++i) {
    LayerSpec spec;
    spec.name = get_str(in);
    spec.role = get_role(in);
    spec.dim = get<std::uint64_t>(in);
    if (get<std::uint8_t>(in) != static_cast<std::uint8_t>(AnchorPrecision::F64)) {
      throw StructuralError("parameter checkpoints must be f64");
    }
    std::vector<double> block(spec.dim);
    read_doubles(in, block);
    specs.push_back(std::move(spec));
    blocks.push_back(std::move(block));
  }
  ParamSet params(std::move(specs));
  if (params.total_dim() != header.total_dim) {
    throw StructuralError("checkpoint total_dim disagrees with its layers");
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    std::copy(blocks[i].begin(), blocks[i].end(), params.values(i).begin());
  }
  return params;
}

void write_anchor(std::ostream& out, const AnchorStore& anchor) {
  write_header(out, kKindAnchor, anchor.source_total_dim(), anchor.roles(),
               static_cast<std::uint32_t>(anchor.layers().size()));
  for (const auto& layer : anchor.layers()) {
    put_str(out, layer.name);
    put(out, static_cast<std::uint8_t>(layer.role));
    put<std::uint64_t>(out, layer.dim());
    put(out, static_cast<std::uint8_t>(layer.precision));
    if (layer.precision == AnchorPrecision::F64) {
      write_doubles(out, layer.values);
    } else {
      put(out, layer.scale);
      put(out, layer.zero_point);
      out.write(reinterpret_cast<const char*>(layer.codes.data()),
                static_cast<std::streamsize>(layer.codes.size()));
    }
  }
}

AnchorStore read_anchor(std::istream& in) {
  const auto header = read_header(in);
  if (header.kind != kKindAnchor) throw StructuralError("checkpoint does not hold an anchor");
  std::vector<AnchorLayer> layers;
  for (std::uint32_t i = 0; i < header.layer_count; ++i) {
    AnchorLayer layer;
    layer.name = get_str(in);
    layer.role = get_role(in);
    const auto dim = get<std::uint64_t>(in);
    const auto precision = get<std::uint8_t>(in);
    if (precision == static_cast<std::uint8_t>(AnchorPrecision::F64)) {
      layer.precision = AnchorPrecision::F64;
      layer.values.resize(dim);
      read_doubles(in, layer.values);
    } else if (precision == static_cast<std::uint8_t>(AnchorPrecision::Q8)) {
      layer.precision = AnchorPrecision::Q8;
      layer.scale = get<double>(in);
      layer.zero_point = get<double>(in);
      layer.codes.resize(dim);
      in.read(reinterpret_cast<char*>(layer.codes.data()), static_cast<std::streamsize>(dim));
      if (!in) throw StructuralError("checkpoint truncated");
    } else {
      throw StructuralError(fmt::format("unknown precision tag {}", precision));
    }
    layers.push_back(std::move(layer));
  }
  return AnchorStore(std::move(layers), header.roles, header.total_dim);
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  write_atomically(path, [&](std::ostream& out) { write_params(out, params); });
}

ParamSet load_params(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_params(in);
}

void save_anchor(const std::filesystem::path& path, const AnchorStore& anchor) {
  write_atomically(path, [&](std::ostream& out) { write_anchor(out, anchor); });
}

AnchorStore load_anchor(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_anchor(in);
}

}  // namespace zotune
