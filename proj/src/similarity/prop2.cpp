#include "lineage/similarity/prop2.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "lineage/errors.hpp"

namespace lineage::similarity {
namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Columns of θ the tap depends on.
std::vector<std::size_t> tap_columns(ModelRef m, std::string_view tap) {
  std::vector<std::size_t> cols;
  for (const auto& name : m.arch.blocks_for_tap(tap)) {
    const auto& b = m.params.layout().block(name);
    for (std::size_t i = 0; i < b.size(); ++i) cols.push_back(b.offset + i);
  }
  return cols;
}

}  // namespace

Prop2Solution prop2_solve_W(ModelRef parent, ModelRef child, std::span<const double> x, std::string_view tap) {
  const nn::ParamVector delta = tap_delta(parent, child, tap);
  const auto cols = tap_columns(parent, tap);
  double norm2 = 0.0;
  for (std::size_t c : cols) norm2 += delta.values()[c] * delta.values()[c];
  if (norm2 == 0.0) throw DegenerateError("parent and child share parameters below the tap; W is undefined");

  const nn::Tensor row = nn::Tensor::row(x);
  const nn::Tensor fp = nn::features_at(parent.arch, parent.params, row, tap);
  const nn::Tensor fc = nn::features_at(child.arch, child.params, row, tap);
  const std::size_t k = fp.cols(), m = cols.size();

  Prop2Solution out;
  out.w = nn::Tensor({k, m});
  for (std::size_t r = 0; r < k; ++r) {
    const double diff = fc[r] - fp[r];
    for (std::size_t c = 0; c < m; ++c) out.w.at(r, c) = diff * delta.values()[cols[c]] / norm2;
  }
  double res = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    double wd = 0.0;
    for (std::size_t c = 0; c < m; ++c) wd += out.w.at(r, c) * delta.values()[cols[c]];
    const double e = fp[r] + wd - fc[r];
    res += e * e;
  }
  out.residual = std::sqrt(res);
  return out;
}

Prop2Solution prop2_solve_Z(ModelRef parent, const nn::Tensor& inputs, const nn::Tensor& targets,
                            std::string_view tap, std::size_t budget) {
  const nn::Tensor f = nn::features_at(parent.arch, parent.params, inputs, tap);
  if (targets.shape() != f.shape())
    throw LayoutError("targets " + nn::shape_to_string(targets.shape()) + " vs features " + nn::shape_to_string(f.shape()));
  const auto cols = tap_columns(parent, tap);
  const std::size_t n = inputs.rows(), k = f.cols(), m = cols.size(), full = parent.params.size();

  Mat gram = Mat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
  std::vector<Mat> jacs;
  jacs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const nn::Tensor jf = nn::jacobian(parent.arch, parent.params, inputs.row_span(i), tap, budget);
    Mat j(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < m; ++c) j(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = jf[r * full + cols[c]];
    Eigen::VectorXd e(static_cast<Eigen::Index>(k));
    for (std::size_t r = 0; r < k; ++r) e(static_cast<Eigen::Index>(r)) = targets.at(i, r) - f.at(i, r);
    gram.noalias() += j.transpose() * j;
    rhs.noalias() += j.transpose() * e;
    jacs.push_back(std::move(j));
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = sv.size() ? 1e-10 * sv(0) : 0.0;
  Eigen::VectorXd uty = svd.matrixU().transpose() * rhs;
  for (Eigen::Index i = 0; i < sv.size(); ++i) uty(i) = sv(i) > tol ? uty(i) / sv(i) : 0.0;
  const Eigen::VectorXd z = svd.matrixV() * uty;

  Prop2Solution out;
  out.z = nn::ParamVector(parent.params.layout());
  for (std::size_t c = 0; c < m; ++c) out.z.values()[cols[c]] = z(static_cast<Eigen::Index>(c));
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd pred = jacs[i] * z;
    for (std::size_t r = 0; r < k; ++r) {
      const double e = f.at(i, r) + pred(static_cast<Eigen::Index>(r)) - targets.at(i, r);
      res += e * e;
    }
  }
  out.residual = res;
  return out;
}

}  // namespace lineage::similarity
