#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aawr/nn/adam.hpp"
#include "aawr/nn/mlp.hpp"

namespace aawr::nn {

/// Binary layout (little endian):
///   "AAWRCKPT" | u32 version | u32 count | entries...
/// entry: u32 name_len | name | u8 activation | u8 head | u32 n_sizes | u32 sizes[]
///        | f64 params (per layer: weight row-major, then bias)
///        | u8 has_adam | [i64 step | f64 beta1 | f64 beta2 | f64 eps | f64 m[] | f64 v[]]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedNetwork {
  std::string name;
  Mlp<double> net;
  std::optional<AdamState<double>> adam;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedNetwork>& nets);
std::vector<NamedNetwork> read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const std::vector<NamedNetwork>& nets);
std::vector<NamedNetwork> load_checkpoint(const std::string& path);

}  // namespace aawr::nn
