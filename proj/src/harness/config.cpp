#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ega/error.hpp"
#include "ega/harness.hpp"

namespace ega::harness {

void RunConfig::validate() const {
  check_tau(tau);
  require(std::isfinite(alpha) && alpha >= 0.0, ErrorCode::invalid_config,
          "alpha must be a non-negative finite number");
  require(batch >= 1, ErrorCode::invalid_config, "batch must be >= 1");
  require(chunk >= 1 && chunk <= batch, ErrorCode::invalid_config,
          "chunk must lie in [1, batch]");
  require(steps >= 1, ErrorCode::invalid_config, "steps must be >= 1");
  require(std::isfinite(lr) && lr > 0.0, ErrorCode::invalid_config, "lr must be positive");
  require(dim >= 2, ErrorCode::invalid_config, "embedding dimension must be >= 2");
  require(eval_every >= 1, ErrorCode::invalid_config, "eval interval must be >= 1");
  require(holdout >= 1, ErrorCode::invalid_config, "holdout must be >= 1");
  for (std::size_t w : hidden) {
    require(w >= 1, ErrorCode::invalid_config, "hidden widths must be positive");
  }
  if (data_dir.empty()) synthetic.validate();
}

StepConfig RunConfig::step_config() const {
  StepConfig out;
  out.mode = mode;
  out.ega = {tau, alpha, hardness};
  out.chunk = chunk;
  out.lr = lr;
  return out;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j{{"mode", to_string(c.mode)},
                   {"hardness", to_string(c.hardness)},
                   {"tau", c.tau},
                   {"alpha", c.alpha},
                   {"batch", c.batch},
                   {"chunk", c.chunk},
                   {"steps", c.steps},
                   {"lr", c.lr},
                   {"encoder", c.encoder == EncoderKind::mlp ? "mlp" : "table"},
                   {"hidden", c.hidden},
                   {"dim", c.dim},
                   {"seed", c.seed},
                   {"eval_every", c.eval_every},
                   {"holdout", c.holdout}};
  if (c.data_dir.empty()) {
    j["data"] = c.synthetic;
  } else {
    j["data"] = c.data_dir;
  }
  return j;
}

void apply_data_source(RunConfig& config, const std::string& source) {
  std::string text;
  if (!source.empty() && source.front() == '{') {
    text = source;
  } else if (std::filesystem::is_directory(source)) {
    config.data_dir = source;
    return;
  } else {
    std::ifstream in(source);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open data source '" + source + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_config, std::string("dataset config is not JSON: ") + e.what());
  }
  SyntheticConfig synthetic = j.get<SyntheticConfig>();
  if (!j.contains("seed")) synthetic.seed = config.seed;
  synthetic.validate();
  config.synthetic = synthetic;
  config.data_dir.clear();
}

PairDataset load_dataset(const RunConfig& config) {
  return config.data_dir.empty() ? generate(config.synthetic) : read_dataset(config.data_dir);
}

}  // namespace ega::harness
