#include "lineage/similarity/metrics.hpp"

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "lineage/errors.hpp"

namespace lineage::similarity {
namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Mat>;

CMap as_mat(const nn::Tensor& t) { return CMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_pair(const nn::Tensor& x, const nn::Tensor& y) {
  if (x.rank() != 2 || x.shape() != y.shape())
    throw LayoutError("feature batches differ: " + nn::shape_to_string(x.shape()) + " vs " + nn::shape_to_string(y.shape()));
  if (x.rows() == 0 || x.cols() == 0) throw ContractError("empty feature batch");
  x.require_finite("parent features");
  y.require_finite("child features");
}

// Centred Gram matrix H·X·Xᵀ·H.
Mat centred_gram(const CMap& x) {
  Mat c = x.rowwise() - x.colwise().mean();
  return c * c.transpose();
}

Mat distances(const CMap& x) {
  const Eigen::Index n = x.rows();
  Mat d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
  }
  return d;
}

Mat double_centre(const Mat& d) {
  const Eigen::VectorXd rm = d.rowwise().mean();
  const Eigen::RowVectorXd cm = d.colwise().mean();
  Mat out = d;
  out.colwise() -= rm;
  out.rowwise() -= cm;
  out.array() += d.mean();
  return out;
}

struct Alignment {
  double a, b, c;  // ⟨Kx,Ky⟩, ⟨Kx,Kx⟩, ⟨Ky,Ky⟩
  double score() const { return a * a / (b * c); }
};

Alignment align(const Mat& kx, const Mat& ky, const char* what) {
  Alignment al{(kx.array() * ky.array()).sum(), kx.squaredNorm(), ky.squaredNorm()};
  if (!(al.b > 0.0) || !(al.c > 0.0))
    throw DegenerateError(std::string(what) + ": a feature batch is constant, the similarity is undefined");
  return al;
}

void require_rows(const nn::Tensor& x, const char* what) {
  if (x.rows() < 2) throw ContractError(std::string(what) + " needs at least two samples");
}

}  // namespace

MetricSpec MetricSpec::parse(std::string_view text) {
  MetricSpec m;
  std::string_view head = text, arg;
  if (auto colon = text.find(':'); colon != std::string_view::npos) {
    head = text.substr(0, colon);
    arg = text.substr(colon + 1);
  }
  auto number = [&](double& dst) {
    if (arg.empty()) return;
    auto res = std::from_chars(arg.data(), arg.data() + arg.size(), dst);
    if (res.ec != std::errc() || res.ptr != arg.data() + arg.size())
      throw ConfigError("bad metric argument in '" + std::string(text) + "'");
  };
  if (head == "l1") m.kind = MetricKind::l1;
  else if (head == "l2") m.kind = MetricKind::l2;
  else if (head == "linf") m.kind = MetricKind::linf;
  else if (head == "lp") m.kind = MetricKind::lp, number(m.p);
  else if (head == "lse") m.kind = MetricKind::lse, number(m.t);
  else if (head == "cka") m.kind = MetricKind::cka;
  else if (head == "dc") m.kind = MetricKind::dc;
  else throw ConfigError("unknown metric '" + std::string(text) + "'");
  if ((m.kind != MetricKind::lp && m.kind != MetricKind::lse) && !arg.empty())
    throw ConfigError("metric '" + std::string(head) + "' takes no argument");
  m.validate();
  return m;
}

std::string MetricSpec::name() const {
  char buf[48];
  switch (kind) {
    case MetricKind::l1: return "l1";
    case MetricKind::l2: return "l2";
    case MetricKind::linf: return "linf";
    case MetricKind::lp:
      std::snprintf(buf, sizeof buf, "lp:%g", p);
      return buf;
    case MetricKind::lse:
      std::snprintf(buf, sizeof buf, "lse:%g", t);
      return buf;
    case MetricKind::cka: return "cka";
    case MetricKind::dc: return "dc";
  }
  return "?";
}

void MetricSpec::validate() const {
  if (kind == MetricKind::lp && !(p >= 1.0)) throw ContractError("lp needs p >= 1");
  if (kind == MetricKind::lse && !(t > 0.0)) throw ContractError("lse needs t > 0");
}

double baseline_similarity(const MetricSpec& metric, const nn::Tensor& x, const nn::Tensor& y) {
  metric.validate();
  check_pair(x, y);
  const std::size_t n = x.rows(), k = x.cols();
  const double nk = static_cast<double>(n * k);
  switch (metric.kind) {
    case MetricKind::l1:
    case MetricKind::l2:
    case MetricKind::lp: {
      const double p = metric.kind == MetricKind::l1 ? 1.0 : (metric.kind == MetricKind::l2 ? 2.0 : metric.p);
      double s = 0.0;
      for (std::size_t i = 0; i < n * k; ++i) {
        const double d = std::abs(x[i] - y[i]);
        s += p == 1.0 ? d : (p == 2.0 ? d * d : std::pow(d, p));
      }
      return -s / nk;
    }
    case MetricKind::linf: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < k; ++j) m = std::max(m, std::abs(x.at(i, j) - y.at(i, j)));
        s += m;
      }
      return -s / nk;
    }
    case MetricKind::lse: {
      const double t = metric.t;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < k; ++j) m = std::max(m, t * std::abs(x.at(i, j) - y.at(i, j)));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(t * std::abs(x.at(i, j) - y.at(i, j)) - m);
        s += m + std::log(z);
      }
      return -s / (nk * t);
    }
    case MetricKind::cka: {
      require_rows(x, "cka");
      return align(centred_gram(as_mat(x)), centred_gram(as_mat(y)), "cka").score();
    }
    case MetricKind::dc: {
      require_rows(x, "dc");
      return align(double_centre(distances(as_mat(x))), double_centre(distances(as_mat(y))), "dc").score();
    }
  }
  throw ContractError("unknown metric");
}

PiWeights pi_weights(const MetricSpec& metric, const nn::Tensor& x, const nn::Tensor& y) {
  metric.validate();
  check_pair(x, y);
  const std::size_t n = x.rows(), k = x.cols();
  const double nk = static_cast<double>(n * k);
  PiWeights w{nn::Tensor({n, k}), metric, 1.0};
  nn::Tensor& pi = w.rows;
  switch (metric.kind) {
    case MetricKind::l1:
      for (std::size_t i = 0; i < n * k; ++i) pi[i] = -sign(x[i] - y[i]) / nk;
      return w;
    case MetricKind::l2:
      for (std::size_t i = 0; i < n * k; ++i) pi[i] = -2.0 * (x[i] - y[i]) / nk;
      return w;
    case MetricKind::lp:
      for (std::size_t i = 0; i < n * k; ++i) {
        const double d = x[i] - y[i];
        pi[i] = -metric.p * sign(d) * std::pow(std::abs(d), metric.p - 1.0) / nk;
      }
      return w;
    case MetricKind::lse:
      for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < k; ++j) m = std::max(m, metric.t * std::abs(x.at(i, j) - y.at(i, j)));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(metric.t * std::abs(x.at(i, j) - y.at(i, j)) - m);
        for (std::size_t j = 0; j < k; ++j) {
          const double d = x.at(i, j) - y.at(i, j);
          pi.at(i, j) = -sign(d) * (std::exp(metric.t * std::abs(d) - m) / z) / nk;
        }
      }
      return w;
    case MetricKind::linf:
      throw ContractError("linf has no linearized form");
    case MetricKind::cka: {
      require_rows(x, "cka");
      const CMap X = as_mat(x), Y = as_mat(y);
      const Mat kx = centred_gram(X), ky = centred_gram(Y);
      const Alignment al = align(kx, ky, "cka");
      w.prefactor = al.score();
      if (al.a == 0.0) return w;  // s = 0 and ds = 0
      // ζ = 4·H·Y·Yᵀ·H·X / A − 4·H·X·Xᵀ·H·X / B; H·X is the column-centred X.
      const Mat hx = X.rowwise() - X.colwise().mean();
      const Mat z = (4.0 / al.a) * (ky * hx) - (4.0 / al.b) * (kx * hx);
      std::copy(z.data(), z.data() + z.size(), pi.data().begin());
      return w;
    }
    case MetricKind::dc: {
      require_rows(x, "dc");
      const CMap X = as_mat(x);
      const Mat dx = distances(X), dy = distances(as_mat(y));
      const Mat cx = double_centre(dx), cy = double_centre(dy);
      const Alignment al = align(cx, cy, "dc");
      w.prefactor = al.score();
      if (al.a == 0.0) return w;
      // ξ_i = Σ_j (4·cy_ij / A − 4·cx_ij / B) · (X_i − X_j) / ‖X_i − X_j‖, zero when X_i = X_j.
      const Mat coef = (4.0 / al.a) * cy - (4.0 / al.b) * cx;
      for (std::size_t i = 0; i < n; ++i) {
        auto row = pi.row_span(i);
        for (std::size_t j = 0; j < n; ++j) {
          const double dist = dx(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (dist == 0.0) continue;
          const double c = coef(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / dist;
          for (std::size_t q = 0; q < k; ++q) row[q] += c * (x.at(i, q) - x.at(j, q));
        }
      }
      return w;
    }
  }
  throw ContractError("unknown metric");
}

}  // namespace lineage::similarity
