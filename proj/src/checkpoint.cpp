#include "aawr/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "aawr/errors.hpp"

namespace aawr::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'A', 'W', 'R', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ParseError("truncated checkpoint");
  return value;
}

void put_layers(std::ostream& out, const Gradients<double>& layers) {
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<double>(out, l.weight(r, c));
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) put<double>(out, l.bias(i));
  }
}

Gradients<double> get_layers(std::istream& in, const std::vector<int>& sizes) {
  Gradients<double> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer<double> layer{Eigen::MatrixXd(sizes[l + 1], sizes[l]), Eigen::VectorXd(sizes[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = get<double>(in);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = get<double>(in);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedNetwork>& nets) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto& entry : nets) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entry.name.size()));
    out.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(entry.net.activation()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(entry.net.head()));
    const auto sizes = entry.net.sizes();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sizes.size()));
    for (int s : sizes) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
    put_layers(out, entry.net.layers());
    put<std::uint8_t>(out, entry.adam ? 1 : 0);
    if (entry.adam) {
      put<std::int64_t>(out, entry.adam->step);
      put<double>(out, entry.adam->beta1);
      put<double>(out, entry.adam->beta2);
      put<double>(out, entry.adam->epsilon);
      put_layers(out, entry.adam->m);
      put_layers(out, entry.adam->v);
    }
  }
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

std::vector<NamedNetwork> read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw ParseError("not a checkpoint file");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  std::vector<NamedNetwork> nets;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedNetwork entry;
    entry.name.resize(get<std::uint32_t>(in));
    if (!in.read(entry.name.data(), static_cast<std::streamsize>(entry.name.size()))) throw ParseError("truncated checkpoint");
    const auto activation = static_cast<Activation>(get<std::uint8_t>(in));
    const auto head = static_cast<OutputHead>(get<std::uint8_t>(in));
    std::vector<int> sizes(get<std::uint32_t>(in));
    if (sizes.size() < 2) throw ParseError("checkpoint network needs at least two sizes");
    for (auto& s : sizes) s = static_cast<int>(get<std::uint32_t>(in));
    entry.net = Mlp<double>::from_layers(get_layers(in, sizes), activation, head);
    if (get<std::uint8_t>(in)) {
      AdamState<double> adam;
      adam.step = get<std::int64_t>(in);
      adam.beta1 = get<double>(in);
      adam.beta2 = get<double>(in);
      adam.epsilon = get<double>(in);
      adam.m = get_layers(in, sizes);
      adam.v = get_layers(in, sizes);
      entry.adam = std::move(adam);
    }
    nets.push_back(std::move(entry));
  }
  return nets;
}

void save_checkpoint(const std::string& path, const std::vector<NamedNetwork>& nets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, nets);
}

std::vector<NamedNetwork> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace aawr::nn
