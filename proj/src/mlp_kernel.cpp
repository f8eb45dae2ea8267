#include "ntkpinn/mlp_kernel.hpp"

#include <string>
#include <vector>

#include "ntkpinn/error.hpp"

namespace ntkpinn {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Block of component c in a (width x J*B) jet matrix.
template <typename M>
auto comp(M& m, std::size_t c, std::size_t batch) {
  return m.middleCols(static_cast<Eigen::Index>(c * batch), static_cast<Eigen::Index>(batch));
}

}  // namespace

struct TaylorMlp::Tape {
  std::size_t batch = 0;
  std::vector<Eigen::MatrixXd> act;      // act[l] feeds layer l; act[0] holds input jets
  std::vector<Eigen::MatrixXd> pre;      // pre-activation jets of layer l
  std::vector<Eigen::MatrixXd> pre_bar;  // adjoints of pre
  std::vector<Eigen::ArrayXXd> tanh;     // tanh of the value component of pre[l]
  Eigen::VectorXd grad;
};

TaylorMlp::TaylorMlp(MlpConfig config) : config_(std::move(config)), layout_(mlp_layout(config_)) {
  if (config_.output_dim != 1) throw ConfigError("TaylorMlp supports scalar outputs only");
}

void TaylorMlp::run_forward(std::span<const double> theta, const Eigen::MatrixXd& points,
                            Tape& tape) const {
  const std::size_t d = config_.input_dim;
  if (theta.size() != layout_.size()) throw DimensionError("params", layout_.size(), theta.size());
  if (static_cast<std::size_t>(points.rows()) != d) {
    throw DimensionError("inputs", d, static_cast<std::size_t>(points.rows()));
  }
  const std::size_t batch = static_cast<std::size_t>(points.cols());
  const std::size_t jets = jet_size();
  const std::size_t num_layers = config_.hidden_widths.size() + 1;
  tape.batch = batch;
  tape.act.assign(num_layers, {});
  tape.pre.assign(num_layers, {});
  tape.tanh.assign(num_layers, {});

  Eigen::MatrixXd& in = tape.act[0];
  in.setZero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(jets * batch));
  for (std::size_t k = 0; k < d; ++k) {
    const double inv_std = 1.0 / config_.input_std[k];
    comp(in, 0, batch).row(k) = (points.row(k).array() - config_.input_mean[k]) * inv_std;
    comp(in, JetIndex::first(k), batch).row(k).setConstant(inv_std);
  }

  for (std::size_t l = 0; l < num_layers; ++l) {
    const ParamBlock& wb = layout_.block("W" + std::to_string(l));
    const ParamBlock& bb = layout_.block("b" + std::to_string(l));
    const RowMajorMap w(theta.data() + wb.offset, wb.rows, wb.cols);
    const Eigen::Map<const Eigen::VectorXd> b(theta.data() + bb.offset, bb.rows);

    Eigen::MatrixXd& z = tape.pre[l];
    z.noalias() = w * tape.act[l];
    comp(z, 0, batch).colwise() += b;
    if (l + 1 == num_layers) break;

    Eigen::MatrixXd& a = tape.act[l + 1];
    a.resize(z.rows(), z.cols());
    Eigen::ArrayXXd& t = tape.tanh[l];
    t = comp(z, 0, batch).array().tanh();
    const Eigen::ArrayXXd s = 1.0 - t.square();
    const Eigen::ArrayXXd t2 = -2.0 * t * s;
    comp(a, 0, batch) = t.matrix();
    for (std::size_t k = 0; k < d; ++k) {
      const auto zk = comp(z, JetIndex::first(k), batch).array();
      const auto zkk = comp(z, JetIndex::second(k, d), batch).array();
      comp(a, JetIndex::first(k), batch) = (s * zk).matrix();
      comp(a, JetIndex::second(k, d), batch) = (s * zkk + t2 * zk.square()).matrix();
    }
  }
}

void TaylorMlp::run_backward(std::span<const double> theta, const Eigen::MatrixXd& seeds,
                             Tape& tape) const {
  const std::size_t d = config_.input_dim;
  const std::size_t batch = tape.batch;
  const std::size_t jets = jet_size();
  const std::size_t num_layers = config_.hidden_widths.size() + 1;
  if (static_cast<std::size_t>(seeds.rows()) != jets || static_cast<std::size_t>(seeds.cols()) != batch) {
    throw DimensionError("seeds", jets * batch, static_cast<std::size_t>(seeds.size()));
  }

  tape.pre_bar.assign(num_layers, {});
  tape.grad.setZero(static_cast<Eigen::Index>(layout_.size()));

  Eigen::MatrixXd& top = tape.pre_bar[num_layers - 1];
  top.resize(1, static_cast<Eigen::Index>(jets * batch));
  for (std::size_t c = 0; c < jets; ++c) comp(top, c, batch) = seeds.row(static_cast<Eigen::Index>(c));

  for (std::size_t l = num_layers; l-- > 0;) {
    const ParamBlock& wb = layout_.block("W" + std::to_string(l));
    const ParamBlock& bb = layout_.block("b" + std::to_string(l));
    const RowMajorMap w(theta.data() + wb.offset, wb.rows, wb.cols);
    const Eigen::MatrixXd& zbar = tape.pre_bar[l];

    RowMajorMutMap gw(tape.grad.data() + wb.offset, wb.rows, wb.cols);
    gw.noalias() += zbar * tape.act[l].transpose();
    tape.grad.segment(static_cast<Eigen::Index>(bb.offset), static_cast<Eigen::Index>(bb.rows)) +=
        comp(zbar, 0, batch).rowwise().sum();
    if (l == 0) break;

    const Eigen::MatrixXd abar = w.transpose() * zbar;
    const Eigen::MatrixXd& z = tape.pre[l - 1];
    Eigen::MatrixXd& out = tape.pre_bar[l - 1];
    out.resize(z.rows(), z.cols());

    const Eigen::ArrayXXd& t = tape.tanh[l - 1];
    const Eigen::ArrayXXd s = 1.0 - t.square();
    const Eigen::ArrayXXd t2 = -2.0 * t * s;
    const Eigen::ArrayXXd t3 = -2.0 * s.square() + 4.0 * t.square() * s;

    Eigen::ArrayXXd value_bar = comp(abar, 0, batch).array() * s;
    for (std::size_t k = 0; k < d; ++k) {
      const auto zk = comp(z, JetIndex::first(k), batch).array();
      const auto zkk = comp(z, JetIndex::second(k, d), batch).array();
      const auto ak_bar = comp(abar, JetIndex::first(k), batch).array();
      const auto akk_bar = comp(abar, JetIndex::second(k, d), batch).array();
      value_bar += ak_bar * t2 * zk + akk_bar * (t3 * zk.square() + t2 * zkk);
      comp(out, JetIndex::first(k), batch) = (ak_bar * s + 2.0 * akk_bar * t2 * zk).matrix();
      comp(out, JetIndex::second(k, d), batch) = (akk_bar * s).matrix();
    }
    comp(out, 0, batch) = value_bar.matrix();
  }
}

Eigen::MatrixXd TaylorMlp::forward(std::span<const double> theta,
                                   const Eigen::MatrixXd& points) const {
  Tape tape;
  run_forward(theta, points, tape);
  const Eigen::MatrixXd& z = tape.pre.back();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(jet_size()), points.cols());
  for (std::size_t c = 0; c < jet_size(); ++c) {
    out.row(static_cast<Eigen::Index>(c)) = comp(z, c, tape.batch);
  }
  return out;
}

Eigen::VectorXd TaylorMlp::pullback(std::span<const double> theta, const Eigen::MatrixXd& points,
                                    const Eigen::MatrixXd& seeds) const {
  Tape tape;
  run_forward(theta, points, tape);
  run_backward(theta, seeds, tape);
  return tape.grad;
}

Eigen::MatrixXd TaylorMlp::pullback(std::span<const double> theta, const Eigen::MatrixXd& points,
                                    std::span<const Eigen::MatrixXd> seeds) const {
  Tape tape;
  run_forward(theta, points, tape);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(layout_.size()), static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    run_backward(theta, seeds[k], tape);
    out.col(static_cast<Eigen::Index>(k)) = tape.grad;
  }
  return out;
}

Eigen::MatrixXd TaylorMlp::per_point_gradients(std::span<const double> theta,
                                               const Eigen::MatrixXd& points,
                                               const Eigen::MatrixXd& seeds) const {
  Tape tape;
  run_forward(theta, points, tape);
  run_backward(theta, seeds, tape);

  const std::size_t batch = tape.batch;
  const std::size_t jets = jet_size();
  const std::size_t num_layers = config_.hidden_widths.size() + 1;
  Eigen::MatrixXd grads(static_cast<Eigen::Index>(layout_.size()), static_cast<Eigen::Index>(batch));

  for (std::size_t l = 0; l < num_layers; ++l) {
    const ParamBlock& wb = layout_.block("W" + std::to_string(l));
    const ParamBlock& bb = layout_.block("b" + std::to_string(l));
    const Eigen::MatrixXd& zbar = tape.pre_bar[l];
    const Eigen::MatrixXd& act = tape.act[l];
    Eigen::MatrixXd zb(zbar.rows(), static_cast<Eigen::Index>(jets));
    Eigen::MatrixXd ab(act.rows(), static_cast<Eigen::Index>(jets));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < jets; ++c) {
        const auto col = static_cast<Eigen::Index>(c * batch + b);
        zb.col(static_cast<Eigen::Index>(c)) = zbar.col(col);
        ab.col(static_cast<Eigen::Index>(c)) = act.col(col);
      }
      double* column = grads.col(static_cast<Eigen::Index>(b)).data();
      RowMajorMutMap gw(column + wb.offset, wb.rows, wb.cols);
      gw.noalias() = zb * ab.transpose();
      Eigen::Map<Eigen::VectorXd>(column + bb.offset, bb.rows) = zb.col(0);
    }
  }
  return grads;
}

}  // namespace ntkpinn
