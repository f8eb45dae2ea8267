#include "ntkpinn/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ntkpinn/error.hpp"
#include "ntkpinn/rng.hpp"

namespace ntkpinn {

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("mlp: input_dim must be >= 1");
  if (output_dim == 0) throw ConfigError("mlp: output_dim must be >= 1");
  if (hidden_widths.empty()) throw ConfigError("mlp: at least one hidden layer is required");
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw ConfigError("mlp: hidden widths must be >= 1");
  }
  if (input_mean.size() != input_dim || input_std.size() != input_dim) {
    throw ConfigError("mlp: normalization must have one (mean, std) pair per input");
  }
  for (double s : input_std) {
    if (!(s > 0.0)) throw ConfigError("mlp: normalization std must be > 0");
  }
}

MlpConfig MlpConfig::for_box(std::span<const double> lo, std::span<const double> hi,
                             std::vector<std::size_t> hidden_widths) {
  if (lo.size() != hi.size()) throw DimensionError("box bounds", lo.size(), hi.size());
  MlpConfig cfg;
  cfg.input_dim = lo.size();
  cfg.hidden_widths = std::move(hidden_widths);
  for (std::size_t k = 0; k < lo.size(); ++k) {
    cfg.input_mean.push_back(0.5 * (lo[k] + hi[k]));
    cfg.input_std.push_back((hi[k] - lo[k]) / std::sqrt(12.0));
  }
  cfg.validate();
  return cfg;
}

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
  std::size_t offset = 0;
  for (const auto& b : blocks_) {
    if (b.offset != offset) throw SchemaError("param layout block '" + b.name + "' is not contiguous");
    offset += b.size();
  }
  size_ = offset;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw SchemaError("param layout has no block '" + name + "'");
}

ParamVector::ParamVector(std::vector<double> v, ParamLayout l)
    : values(std::move(v)), layout(std::move(l)) {
  if (values.size() != layout.size()) throw DimensionError("param vector", layout.size(), values.size());
}

ParamLayout mlp_layout(const MlpConfig& config) {
  config.validate();
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  widths.push_back(config.output_dim);

  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    blocks.push_back({"W" + std::to_string(l), out, in, offset});
    offset += out * in;
    blocks.push_back({"b" + std::to_string(l), out, 1, offset});
    offset += out;
  }
  return ParamLayout(std::move(blocks));
}

ParamVector init_xavier(const MlpConfig& config, std::uint64_t seed) {
  ParamLayout layout = mlp_layout(config);
  std::vector<double> values(layout.size(), 0.0);
  Rng rng(seed, streams::kModelInit);
  for (const auto& b : layout.blocks()) {
    if (b.name.front() != 'W') continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
    for (std::size_t i = 0; i < b.size(); ++i) values[b.offset + i] = rng.uniform(-limit, limit);
  }
  return ParamVector(std::move(values), std::move(layout));
}

std::vector<ad::ScalarGraph> compile(const MlpConfig& config) {
  const ParamLayout layout = mlp_layout(config);
  const std::size_t num_layers = config.hidden_widths.size() + 1;

  std::vector<ad::ScalarGraph> graphs;
  for (std::size_t out = 0; out < config.output_dim; ++out) {
    ad::ScalarGraph g(config.input_dim, layout.size());
    std::vector<ad::NodeId> act;
    for (std::size_t k = 0; k < config.input_dim; ++k) {
      const auto shifted = g.sub(g.input(k), g.constant(config.input_mean[k]));
      act.push_back(g.div(shifted, g.constant(config.input_std[k])));
    }
    for (std::size_t l = 0; l < num_layers; ++l) {
      const ParamBlock& w = layout.block("W" + std::to_string(l));
      const ParamBlock& b = layout.block("b" + std::to_string(l));
      const bool last = l + 1 == num_layers;
      // The output layer only needs the row feeding this output coordinate.
      const std::size_t row_begin = last ? out : 0;
      const std::size_t row_end = last ? out + 1 : w.rows;
      std::vector<ad::NodeId> next;
      for (std::size_t r = row_begin; r < row_end; ++r) {
        std::vector<ad::NodeId> terms;
        for (std::size_t c = 0; c < w.cols; ++c) {
          terms.push_back(g.mul(g.param(w.offset + r * w.cols + c), act[c]));
        }
        terms.push_back(g.param(b.offset + r));
        const ad::NodeId z = g.sum(terms);
        next.push_back(last ? z : g.tanh(z));
      }
      act = std::move(next);
    }
    g.set_output(act.front());
    graphs.push_back(std::move(g));
  }
  return graphs;
}

void save_params(const ParamVector& params, const std::filesystem::path& stem) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  auto bin = stem;
  bin += ".bin";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw Error("cannot write " + bin.string());
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));

  nlohmann::json sidecar;
  sidecar["dtype"] = "float64-le";
  sidecar["size"] = params.size();
  for (const auto& b : params.layout.blocks()) {
    sidecar["blocks"].push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"offset", b.offset}});
  }
  auto json_path = stem;
  json_path += ".json";
  std::ofstream meta(json_path);
  if (!meta) throw Error("cannot write " + json_path.string());
  meta << sidecar.dump(2) << '\n';
}

ParamVector load_params(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream meta(json_path);
  if (!meta) throw Error("cannot read " + json_path.string());
  const auto sidecar = nlohmann::json::parse(meta);
  std::vector<ParamBlock> blocks;
  for (const auto& b : sidecar.at("blocks")) {
    blocks.push_back({b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
                      b.at("cols").get<std::size_t>(), b.at("offset").get<std::size_t>()});
  }
  ParamLayout layout(std::move(blocks));

  auto bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error("cannot read " + bin.string());
  std::vector<double> values(layout.size());
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double))) {
    throw DimensionError("checkpoint payload", values.size() * sizeof(double),
                         static_cast<std::size_t>(in.gcount()));
  }
  return ParamVector(std::move(values), std::move(layout));
}

}  // namespace ntkpinn
