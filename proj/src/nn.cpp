#include "pisorb/nn.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "pisorb/stats.hpp"

namespace pisorb {

using nlohmann::json;

namespace {

constexpr double kBnEps = 1e-5;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void fill_xavier(Matrix& w, double gain, std::mt19937_64& rng) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = (2.0 * uniform01(rng) - 1.0) * bound;
}

std::string block_prefix(int b) { return "block" + std::to_string(b + 1); }

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double swish(double x) { return x * sigmoid(x); }

static double swish_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Eigen::Vector3d sips_transform(const Eigen::Vector3d& raw) {
  return {100.0 * sigmoid(raw[0]), 0.01 + 9.99 * sigmoid(raw[1]),
          0.5 + 9.5 * sigmoid(raw[2])};
}

Eigen::Vector3d sips_transform_inverse(const Eigen::Vector3d& p) {
  const auto logit = [](double u) { return std::log(u / (1.0 - u)); };
  return {logit(p[0] / 100.0), logit((p[1] - 0.01) / 9.99), logit((p[2] - 0.5) / 9.5)};
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.hidden_widths.empty()) throw std::invalid_argument("network needs >= 1 block");
  for (int w : cfg_.hidden_widths)
    if (w <= 0) throw std::invalid_argument("hidden widths must be positive");
  if (cfg_.dropout_p < 0.0 || cfg_.dropout_p >= 1.0)
    throw std::invalid_argument("dropout_p must be in [0, 1)");
}

int Network::block_in_dim(int b) const {
  return b == 0 ? cfg_.projection_dim : cfg_.hidden_widths[b - 1];
}

ParameterSet Network::init(const NetworkConfig& cfg) {
  Network net(cfg);
  std::mt19937_64 rng(cfg.seed);
  ParameterSet p;

  Matrix wp(cfg.input_dim, cfg.projection_dim);
  fill_xavier(wp, 0.5, rng);  // projection uses reduced gain
  p["projection.weight"] = wp;
  p["projection.bias"] = Matrix::Zero(1, cfg.projection_dim);

  for (int b = 0; b < net.n_blocks(); ++b) {
    const int din = net.block_in_dim(b), dout = cfg.hidden_widths[b];
    const std::string pre = block_prefix(b);
    Matrix w(din, dout);
    fill_xavier(w, 1.0, rng);
    p[pre + ".linear.weight"] = w;
    p[pre + ".linear.bias"] = Matrix::Zero(1, dout);
    p[pre + ".bn.scale"] = Matrix::Ones(1, dout);
    p[pre + ".bn.shift"] = Matrix::Zero(1, dout);
    p[pre + ".bn.running_mean"] = Matrix::Zero(1, dout);
    p[pre + ".bn.running_var"] = Matrix::Ones(1, dout);
    if (din != dout) {
      Matrix ws(din, dout);
      fill_xavier(ws, 1.0, rng);
      p[pre + ".skip.weight"] = ws;
      p[pre + ".skip.bias"] = Matrix::Zero(1, dout);
    }
  }

  const int last = cfg.hidden_widths.back();
  for (const std::string head : {"head_mean", "head_logvar", "head_sips"}) {
    const int dout = head == "head_sips" ? 3 : 1;
    Matrix w(last, dout);
    fill_xavier(w, 1.0, rng);
    p[head + ".weight"] = w;
    p[head + ".bias"] = Matrix::Zero(1, dout);
  }
  return p;
}

ForwardOutput Network::forward(ParameterSet& params, const Matrix& X, Mode mode,
                               std::uint64_t rng_seed, ForwardCache* cache,
                               bool update_running,
                               const std::set<std::string>* frozen_stats) const {
  if (X.cols() != cfg_.input_dim)
    throw std::invalid_argument("forward: batch has wrong feature count");
  const Eigen::Index n = X.rows();
  if (mode == Mode::Train && n < 2)
    throw std::invalid_argument("forward: Train mode needs batch size >= 2");

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = X;
  c.mode = mode;
  c.blocks.assign(n_blocks(), {});

  Matrix h = (X * params.at("projection.weight")).rowwise() +
             params.at("projection.bias").row(0);
  c.proj_out = h;

  const bool dropout_active = (mode != Mode::Eval) && cfg_.dropout_p > 0.0;
  for (int b = 0; b < n_blocks(); ++b) {
    const std::string pre = block_prefix(b);
    BlockCache& bc = c.blocks[b];
    bc.h_in = h;
    bc.z = (h * params.at(pre + ".linear.weight")).rowwise() +
           params.at(pre + ".linear.bias").row(0);

    const Eigen::RowVectorXd gamma = params.at(pre + ".bn.scale").row(0);
    const Eigen::RowVectorXd beta = params.at(pre + ".bn.shift").row(0);
    if (mode == Mode::Train) {
      bc.used_batch_stats = true;
      bc.mu = bc.z.colwise().mean();
      Matrix centered = bc.z.rowwise() - bc.mu;
      bc.var = centered.array().square().colwise().mean();
      const Eigen::RowVectorXd istd =
          (bc.var.array() + kBnEps).rsqrt();
      bc.xhat = centered.array().rowwise() * istd.array();
      if (update_running) {
        const double m = cfg_.bn_momentum;
        const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
        Matrix& rm = params.at(pre + ".bn.running_mean");
        Matrix& rv = params.at(pre + ".bn.running_var");
        const bool frozen =
            frozen_stats && frozen_stats->count(pre + ".bn.running_mean") > 0;
        if (!frozen) {
          rm.row(0) = (1.0 - m) * rm.row(0) + m * bc.mu;
          rv.row(0) = (1.0 - m) * rv.row(0) + m * (bc.var * unbias);
        }
      }
    } else {
      bc.used_batch_stats = false;
      const Eigen::RowVectorXd rm = params.at(pre + ".bn.running_mean").row(0);
      const Eigen::RowVectorXd rv = params.at(pre + ".bn.running_var").row(0);
      const Eigen::RowVectorXd istd = (rv.array() + kBnEps).rsqrt();
      bc.xhat = (bc.z.rowwise() - rm).array().rowwise() * istd.array();
    }
    bc.bn_out = (bc.xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
    bc.act = bc.bn_out.unaryExpr([](double x) { return swish(x); });

    if (dropout_active) {
      std::mt19937_64 rng(stats::mix_seed(rng_seed, static_cast<std::uint64_t>(b)));
      const double keep = 1.0 - cfg_.dropout_p;
      bc.mask.resize(bc.act.rows(), bc.act.cols());
      for (Eigen::Index i = 0; i < bc.mask.rows(); ++i)
        for (Eigen::Index j = 0; j < bc.mask.cols(); ++j)
          bc.mask(i, j) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
      bc.dropped = bc.act.cwiseProduct(bc.mask);
    } else {
      bc.dropped = bc.act;
    }

    Matrix skip;
    if (h.cols() == bc.dropped.cols()) {
      skip = h;
    } else {
      skip = (h * params.at(pre + ".skip.weight")).rowwise() +
             params.at(pre + ".skip.bias").row(0);
    }
    h = bc.dropped + skip;
  }
  c.final_h = h;

  ForwardOutput out;
  out.mean = (h * params.at("head_mean.weight")).col(0).array() +
             params.at("head_mean.bias")(0, 0);
  out.log_var = (h * params.at("head_logvar.weight")).col(0).array() +
                params.at("head_logvar.bias")(0, 0);
  out.sips_raw = (h * params.at("head_sips.weight")).rowwise() +
                 params.at("head_sips.bias").row(0);
  out.sips.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    out.sips.row(i) = sips_transform(out.sips_raw.row(i).transpose()).transpose();
  c.out = out;
  return out;
}

ParameterSet Network::backward(const ParameterSet& params, const ForwardCache& cache,
                               const Vector& d_mean, const Vector& d_logvar,
                               const Matrix& d_sips) const {
  const Eigen::Index n = cache.input.rows();
  if (d_mean.size() != n || d_logvar.size() != n || d_sips.rows() != n)
    throw std::invalid_argument("backward: output-gradient shape mismatch");

  ParameterSet g;

  // chain the bounded Sips transform back to the raw head activations
  Matrix d_raw(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sa = sigmoid(cache.out.sips_raw(i, 0));
    const double sb = sigmoid(cache.out.sips_raw(i, 1));
    const double sc = sigmoid(cache.out.sips_raw(i, 2));
    d_raw(i, 0) = d_sips(i, 0) * 100.0 * sa * (1.0 - sa);
    d_raw(i, 1) = d_sips(i, 1) * 9.99 * sb * (1.0 - sb);
    d_raw(i, 2) = d_sips(i, 2) * 9.5 * sc * (1.0 - sc);
  }

  g["head_mean.weight"] = cache.final_h.transpose() * d_mean;
  g["head_mean.bias"] = Matrix::Constant(1, 1, d_mean.sum());
  g["head_logvar.weight"] = cache.final_h.transpose() * d_logvar;
  g["head_logvar.bias"] = Matrix::Constant(1, 1, d_logvar.sum());
  g["head_sips.weight"] = cache.final_h.transpose() * d_raw;
  g["head_sips.bias"] = d_raw.colwise().sum();

  Matrix dh = d_mean * params.at("head_mean.weight").transpose() +
              d_logvar * params.at("head_logvar.weight").transpose() +
              d_raw * params.at("head_sips.weight").transpose();

  for (int b = n_blocks() - 1; b >= 0; --b) {
    const std::string pre = block_prefix(b);
    const BlockCache& bc = cache.blocks[b];
    Matrix dh_in = Matrix::Zero(bc.h_in.rows(), bc.h_in.cols());

    // skip path
    if (bc.h_in.cols() == dh.cols()) {
      dh_in += dh;
    } else {
      g[pre + ".skip.weight"] = bc.h_in.transpose() * dh;
      g[pre + ".skip.bias"] = dh.colwise().sum();
      dh_in += dh * params.at(pre + ".skip.weight").transpose();
    }

    // main path
    Matrix d_act = bc.mask.size() > 0 ? dh.cwiseProduct(bc.mask) : dh;
    Matrix d_bnout =
        d_act.cwiseProduct(bc.bn_out.unaryExpr([](double x) { return swish_grad(x); }));

    const Eigen::RowVectorXd gamma = params.at(pre + ".bn.scale").row(0);
    g[pre + ".bn.scale"] = d_bnout.cwiseProduct(bc.xhat).colwise().sum();
    g[pre + ".bn.shift"] = d_bnout.colwise().sum();

    Matrix dxhat = d_bnout.array().rowwise() * gamma.array();
    Matrix dz;
    if (bc.used_batch_stats) {
      const double nn = static_cast<double>(bc.z.rows());
      const Eigen::RowVectorXd istd = (bc.var.array() + kBnEps).rsqrt();
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_x = dxhat.cwiseProduct(bc.xhat).colwise().sum();
      dz = ((dxhat * nn).rowwise() - sum_dxhat -
            (bc.xhat.array().rowwise() * sum_dxhat_x.array()).matrix())
               .array()
               .rowwise() *
           (istd / nn).array();
    } else {
      const Eigen::RowVectorXd rv = params.at(pre + ".bn.running_var").row(0);
      const Eigen::RowVectorXd istd = (rv.array() + kBnEps).rsqrt();
      dz = dxhat.array().rowwise() * istd.array();
    }

    g[pre + ".linear.weight"] = bc.h_in.transpose() * dz;
    g[pre + ".linear.bias"] = dz.colwise().sum();
    dh_in += dz * params.at(pre + ".linear.weight").transpose();

    dh = dh_in;
  }

  g["projection.weight"] = cache.input.transpose() * dh;
  g["projection.bias"] = dh.colwise().sum();
  return g;
}

std::vector<std::string> Network::tensor_names() const {
  std::vector<std::string> names = {"projection.weight", "projection.bias"};
  for (int b = 0; b < n_blocks(); ++b) {
    const std::string pre = block_prefix(b);
    names.push_back(pre + ".linear.weight");
    names.push_back(pre + ".linear.bias");
    names.push_back(pre + ".bn.scale");
    names.push_back(pre + ".bn.shift");
    names.push_back(pre + ".bn.running_mean");
    names.push_back(pre + ".bn.running_var");
    if (block_in_dim(b) != cfg_.hidden_widths[b]) {
      names.push_back(pre + ".skip.weight");
      names.push_back(pre + ".skip.bias");
    }
  }
  for (const std::string head : {"head_mean", "head_logvar", "head_sips"}) {
    names.push_back(head + ".weight");
    names.push_back(head + ".bias");
  }
  return names;
}

std::vector<std::string> Network::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& n : tensor_names())
    if (n.find(".bn.running_") == std::string::npos) out.push_back(n);
  return out;
}

std::vector<std::string> Network::encoder_block_names(int from_block, int to_block,
                                                      bool include_running_stats) const {
  std::vector<std::string> out;
  for (int b = from_block - 1; b <= to_block - 1 && b < n_blocks(); ++b) {
    if (b < 0) continue;
    const std::string pre = block_prefix(b);
    out.push_back(pre + ".linear.weight");
    out.push_back(pre + ".linear.bias");
    out.push_back(pre + ".bn.scale");
    out.push_back(pre + ".bn.shift");
    if (include_running_stats) {
      out.push_back(pre + ".bn.running_mean");
      out.push_back(pre + ".bn.running_var");
    }
    if (block_in_dim(b) != cfg_.hidden_widths[b]) {
      out.push_back(pre + ".skip.weight");
      out.push_back(pre + ".skip.bias");
    }
  }
  return out;
}

long Network::parameter_count(const ParameterSet& params) const {
  long n = 0;
  for (const auto& name : trainable_names()) n += params.at(name).size();
  return n;
}

void Network::validate_shapes(const ParameterSet& params) const {
  const ParameterSet ref = init(cfg_);
  for (const auto& [name, t] : ref) {
    const auto it = params.find(name);
    if (it == params.end())
      throw std::runtime_error("missing tensor: " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
      throw std::runtime_error("shape mismatch for tensor " + name + ": expected " +
                               std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                               ", got " + std::to_string(it->second.rows()) + "x" +
                               std::to_string(it->second.cols()));
  }
}

json config_to_json(const NetworkConfig& cfg) {
  json j;
  j["input_dim"] = cfg.input_dim;
  j["projection_dim"] = cfg.projection_dim;
  j["hidden_widths"] = cfg.hidden_widths;
  j["dropout_p"] = cfg.dropout_p;
  j["bn_momentum"] = cfg.bn_momentum;
  j["seed"] = cfg.seed;
  return j;
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig cfg;
  cfg.input_dim = j.at("input_dim").get<int>();
  cfg.projection_dim = j.at("projection_dim").get<int>();
  cfg.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  cfg.bn_momentum = j.at("bn_momentum").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

namespace {

json tensor_to_json(const Matrix& t) {
  json j;
  j["shape"] = {t.rows(), t.cols()};
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(t.size()));
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index k = 0; k < t.cols(); ++k) data.push_back(t(i, k));
  j["data"] = data;
  return j;
}

Matrix tensor_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (shape.size() != 2 ||
      static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::runtime_error("malformed tensor in model file");
  Matrix t(shape[0], shape[1]);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index k = 0; k < t.cols(); ++k) t(i, k) = data[idx++];
  return t;
}

}  // namespace

void save_model(const std::string& path, const ParameterSet& params,
                const NetworkConfig& cfg, const json& metadata,
                const ParameterSet& fisher) {
  json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(cfg);
  j["metadata"] = metadata;
  json tensors = json::object();
  for (const auto& [name, t] : params) tensors[name] = tensor_to_json(t);
  for (const auto& [name, t] : fisher) tensors["fisher." + name] = tensor_to_json(t);
  j["tensors"] = tensors;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << j.dump(2) << '\n';
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  json j;
  in >> j;
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw std::runtime_error("unsupported model file version");
  ModelFile mf;
  mf.config = config_from_json(j.at("config"));
  mf.metadata = j.value("metadata", json::object());
  for (auto& [name, tj] : j.at("tensors").items()) {
    if (name.rfind("fisher.", 0) == 0)
      mf.fisher[name.substr(7)] = tensor_from_json(tj);
    else
      mf.params[name] = tensor_from_json(tj);
  }
  Network(mf.config).validate_shapes(mf.params);
  return mf;
}

}  // namespace pisorb
