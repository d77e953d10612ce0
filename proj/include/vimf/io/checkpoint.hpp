#pragma once

// VMFK1 container:
//   5 bytes   "VMFK1"
//   u64 LE    length L of the metadata block
//   L bytes   UTF-8 JSON metadata
//   f64 LE    every block listed in metadata["blocks"], in order
//
// For a parameter array the value block precedes its "<name>.log_std"
// block. Blockmodel checkpoints start with "eta", "log_rho", "log_alpha";
// truncated-SVD checkpoints hold the "left" and "right" factors.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "vimf/core/tensor.hpp"
#include "vimf/eval/metrics.hpp"
#include "vimf/mf/nnmf.hpp"
#include "vimf/sbm/sbm.hpp"

namespace vimf::io {

inline constexpr char kMagic[5] = {'V', 'M', 'F', 'K', '1'};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json to_json(const mf::NnmfHyperparams& hp) {
  return {{"K", hp.K},
          {"K_prime", hp.K_prime},
          {"D", hp.D},
          {"hidden_layers", hp.hidden_layers},
          {"hidden_width", hp.hidden_width},
          {"side_info_width", hp.side_info_width},
          {"noise_sigma", hp.noise_sigma},
          {"prior_std_U", hp.prior_std_U},
          {"prior_std_V", hp.prior_std_V},
          {"prior_std_U_prime", hp.prior_std_U_prime},
          {"prior_std_V_prime", hp.prior_std_V_prime},
          {"prior_std_theta", hp.prior_std_theta},
          {"lambda", hp.lambda},
          {"init_std", hp.init_std},
          {"init_log_std", hp.init_log_std}};
}

inline mf::NnmfHyperparams nnmf_hyperparams_from_json(const nlohmann::json& j) {
  mf::NnmfHyperparams hp;
  hp.K = j.at("K").get<std::size_t>();
  hp.K_prime = j.at("K_prime").get<std::size_t>();
  hp.D = j.at("D").get<std::size_t>();
  hp.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  hp.hidden_width = j.at("hidden_width").get<std::size_t>();
  hp.side_info_width = j.at("side_info_width").get<std::size_t>();
  hp.noise_sigma = j.at("noise_sigma").get<double>();
  hp.prior_std_U = j.at("prior_std_U").get<double>();
  hp.prior_std_V = j.at("prior_std_V").get<double>();
  hp.prior_std_U_prime = j.at("prior_std_U_prime").get<double>();
  hp.prior_std_V_prime = j.at("prior_std_V_prime").get<double>();
  hp.prior_std_theta = j.at("prior_std_theta").get<double>();
  hp.lambda = j.at("lambda").get<double>();
  hp.init_std = j.at("init_std").get<double>();
  hp.init_log_std = j.at("init_log_std").get<double>();
  return hp;
}

inline nlohmann::json to_json(const sbm::SbmHyperparams& hp) {
  return {{"T", hp.T},
          {"K", hp.K},
          {"K_prime", hp.K_prime},
          {"D", hp.D},
          {"hidden_layers", hp.hidden_layers},
          {"hidden_width", hp.hidden_width},
          {"prior_std_U", hp.prior_std_U},
          {"prior_std_U_prime", hp.prior_std_U_prime},
          {"prior_std_theta", hp.prior_std_theta},
          {"init_std", hp.init_std},
          {"init_log_std", hp.init_log_std},
          {"alpha_init", hp.alpha_init},
          {"eta_init_noise", hp.eta_init_noise}};
}

inline sbm::SbmHyperparams sbm_hyperparams_from_json(const nlohmann::json& j) {
  sbm::SbmHyperparams hp;
  hp.T = j.at("T").get<std::size_t>();
  hp.K = j.at("K").get<std::size_t>();
  hp.K_prime = j.at("K_prime").get<std::size_t>();
  hp.D = j.at("D").get<std::size_t>();
  hp.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  hp.hidden_width = j.at("hidden_width").get<std::size_t>();
  hp.prior_std_U = j.at("prior_std_U").get<double>();
  hp.prior_std_U_prime = j.at("prior_std_U_prime").get<double>();
  hp.prior_std_theta = j.at("prior_std_theta").get<double>();
  hp.init_std = j.at("init_std").get<double>();
  hp.init_log_std = j.at("init_log_std").get<double>();
  hp.alpha_init = j.at("alpha_init").get<double>();
  hp.eta_init_noise = j.at("eta_init_noise").get<double>();
  return hp;
}

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  os.write(b, 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

struct BlockWriter {
  nlohmann::json blocks = nlohmann::json::array();
  std::vector<const Tensor*> data;

  void add(const std::string& name, const Tensor& t) {
    blocks.push_back({{"name", name}, {"shape", t.shape()}});
    data.push_back(&t);
  }
};

inline void add_params(BlockWriter& w, nlohmann::json& meta, const std::vector<mf::ParamArray>& arrays) {
  meta["params"] = nlohmann::json::array();
  for (const auto& a : arrays) {
    meta["params"].push_back({{"name", a.name}, {"prior_std", a.prior_std}, {"variational", a.variational()}});
    w.add(a.name, a.value);
    if (a.log_std) w.add(a.name + ".log_std", *a.log_std);
  }
}

inline void write_container(std::ostream& os, nlohmann::json meta, const BlockWriter& w) {
  meta["blocks"] = w.blocks;
  const std::string text = meta.dump();
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : w.data)
    for (double v : t->data()) write_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw CheckpointError("failed writing checkpoint");
}

inline std::vector<Tensor> read_blocks(std::istream& is, const nlohmann::json& blocks) {
  std::vector<Tensor> out;
  for (const auto& b : blocks) {
    Tensor t(b.at("shape").get<Tensor::Shape>());
    for (double& v : t.storage()) v = std::bit_cast<double>(read_u64(is));
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<mf::ParamArray> take_params(const nlohmann::json& meta, std::vector<Tensor>& blocks,
                                               std::size_t& next) {
  std::vector<mf::ParamArray> arrays;
  for (const auto& p : meta.at("params")) {
    mf::ParamArray a;
    a.name = p.at("name").get<std::string>();
    a.prior_std = p.at("prior_std").get<double>();
    if (next >= blocks.size()) throw CheckpointError("checkpoint is missing block '" + a.name + "'");
    a.value = std::move(blocks[next++]);
    if (p.at("variational").get<bool>()) {
      if (next >= blocks.size()) throw CheckpointError("checkpoint is missing '" + a.name + ".log_std'");
      a.log_std = std::move(blocks[next++]);
    }
    arrays.push_back(std::move(a));
  }
  if (next != blocks.size()) throw CheckpointError("checkpoint has unreferenced blocks");
  return arrays;
}

inline Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t = Tensor::matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  if (t.shape().size() != 2) throw CheckpointError("svd factor must be a matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t(r, c);
  return m;
}

}  // namespace detail

struct Checkpoint {
  nlohmann::json meta;
  std::variant<mf::NnmfModel, sbm::SbmModel, eval::SvdBaseline> model;

  std::string kind() const { return meta.at("kind").get<std::string>(); }
  const mf::NnmfModel& nnmf() const { return std::get<mf::NnmfModel>(model); }
  const sbm::SbmModel& sbm() const { return std::get<sbm::SbmModel>(model); }
  const eval::SvdBaseline& svd() const { return std::get<eval::SvdBaseline>(model); }
};

/// `extra` is stored verbatim under metadata["extra"].
inline void write_checkpoint(std::ostream& os, const mf::NnmfModel& m, std::uint64_t seed,
                             const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json meta{{"kind", "nnmf"},
                      {"mode", mf::to_string(m.mode())},
                      {"n_users", m.n_users()},
                      {"n_items", m.n_items()},
                      {"seed", seed},
                      {"hyperparams", to_json(m.hyperparams())},
                      {"extra", extra}};
  detail::BlockWriter w;
  detail::add_params(w, meta, m.arrays());
  detail::write_container(os, std::move(meta), w);
}

inline void write_checkpoint(std::ostream& os, const sbm::SbmModel& m, std::uint64_t seed,
                             const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json meta{{"kind", "sbm"},
                      {"n_nodes", m.n_nodes()},
                      {"seed", seed},
                      {"hyperparams", to_json(m.hyperparams())},
                      {"extra", extra}};
  const Tensor log_alpha({1}, m.log_alpha());
  detail::BlockWriter w;
  w.add("eta", m.eta());
  w.add("log_rho", m.log_rho());
  w.add("log_alpha", log_alpha);
  detail::add_params(w, meta, m.arrays());
  detail::write_container(os, std::move(meta), w);
}

inline void write_checkpoint(std::ostream& os, const eval::SvdBaseline& m, std::uint64_t seed,
                             const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json meta{{"kind", "svd"},
                      {"n_rows", m.n_rows()},
                      {"n_cols", m.n_cols()},
                      {"rank", m.left().cols()},
                      {"fill_value", m.fill_value()},
                      {"seed", seed},
                      {"extra", extra}};
  const Tensor left = detail::from_eigen(m.left());
  const Tensor right = detail::from_eigen(m.right());
  detail::BlockWriter w;
  w.add("left", left);
  w.add("right", right);
  detail::write_container(os, std::move(meta), w);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a VMFK1 checkpoint");
  }
  const std::uint64_t len = detail::read_u64(is);
  if (len > (std::uint64_t{1} << 32)) throw CheckpointError("checkpoint metadata length is implausible");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint truncated");
  Checkpoint c;
  try {
    c.meta = nlohmann::json::parse(text);
    std::vector<Tensor> blocks = detail::read_blocks(is, c.meta.at("blocks"));
    std::size_t next = 0;
    const std::string kind = c.kind();
    if (kind == "nnmf") {
      const std::string mode = c.meta.at("mode").get<std::string>();
      if (mode != "map" && mode != "vi") throw CheckpointError("unknown fit mode '" + mode + "'");
      auto arrays = detail::take_params(c.meta, blocks, next);
      c.model = mf::NnmfModel::from_arrays(nnmf_hyperparams_from_json(c.meta.at("hyperparams")),
                                           mode == "vi" ? mf::FitMode::vi : mf::FitMode::map,
                                           c.meta.at("n_users").get<std::size_t>(),
                                           c.meta.at("n_items").get<std::size_t>(), std::move(arrays));
    } else if (kind == "sbm") {
      if (blocks.size() < 3 || blocks[2].size() != 1) throw CheckpointError("malformed blockmodel checkpoint");
      Tensor eta = std::move(blocks[0]);
      Tensor log_rho = std::move(blocks[1]);
      const double log_alpha = blocks[2][0];
      next = 3;
      auto arrays = detail::take_params(c.meta, blocks, next);
      c.model = sbm::SbmModel::from_state(sbm_hyperparams_from_json(c.meta.at("hyperparams")), std::move(eta),
                                          std::move(log_rho), log_alpha, std::move(arrays));
    } else if (kind == "svd") {
      if (blocks.size() != 2) throw CheckpointError("malformed svd checkpoint");
      c.model = eval::SvdBaseline::from_factors(detail::to_eigen(blocks[0]), detail::to_eigen(blocks[1]),
                                                c.meta.at("fill_value").get<double>());
    } else {
      throw CheckpointError("unknown checkpoint kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint metadata: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint data");
  return c;
}

template <class Model>
void save_checkpoint(const std::string& path, const Model& m, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  write_checkpoint(out, m, seed, extra);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  try {
    return read_checkpoint(in);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace vimf::io
