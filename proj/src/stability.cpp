#include "donet/stability.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "donet/ops.hpp"

namespace donet::stability {

Vec DynamicsHandle::operator()(const Vec& x) const {
  if (x.size() != dimension) {
    throw std::invalid_argument("state has dimension " + std::to_string(x.size()) +
                                ", dynamics expect " + std::to_string(dimension));
  }
  Vec y = f(x);
  if (y.size() != dimension) throw std::runtime_error("dynamics changed dimension");
  return y;
}

namespace {

Tensor transposed_tensor(const Matrix& a) {
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t[j * a.rows() + i] = a(i, j);
  }
  return t;
}

// x{d} → (x·Aᵀ){d}, i.e. A·x.
Var apply_matrix(Graph& g, const Tensor& at, Var x) {
  const std::size_t d = x.shape()[0];
  return reshape(matmul(reshape(x, {1, d}), g.constant(at)), {at.dim(1)});
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

Matrix parse_rows(std::string_view body) {
  std::vector<std::vector<double>> rows;
  for (auto row : split(body, ';')) {
    std::vector<double> r;
    for (auto cell : split(row, ',')) r.push_back(parse_number(cell));
    rows.push_back(std::move(r));
  }
  const std::size_t n = rows.size();
  Matrix m(n, rows[0].size());
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != m.cols()) throw std::invalid_argument("ragged matrix rows");
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

DynamicsHandle linear_dynamics(const Matrix& a) {
  if (!a.square()) throw std::invalid_argument("linear dynamics need a square matrix");
  DynamicsHandle h;
  h.dimension = a.rows();
  h.f = [a](const Vec& x) { return a * std::span<const double>(x); };
  h.tensor_f = [at = transposed_tensor(a)](Graph& g, Var x) {
    return apply_matrix(g, at, x);
  };
  return h;
}

DynamicsHandle dynamics_by_id(std::string_view id) {
  if (id.starts_with("linear:")) return linear_dynamics(parse_rows(id.substr(7)));
  if (id.starts_with("neg_identity:")) {
    const auto n = static_cast<std::size_t>(parse_number(id.substr(13)));
    if (n < 1) throw std::invalid_argument("neg_identity needs a positive dimension");
    return linear_dynamics(combine(-1.0, Matrix::identity(n), 0.0, Matrix::identity(n)));
  }
  if (id == "cubic") {
    DynamicsHandle h;
    h.dimension = 2;
    h.f = [](const Vec& x) { return Vec{x[1] - x[0] * x[0] * x[0], -x[0] - x[1]}; };
    h.tensor_f = [](Graph& g, Var x) {
      const Tensor linear_t = transposed_tensor(Matrix{{0, 1}, {-1, -1}});
      const Tensor cubic_t = transposed_tensor(Matrix{{-1, 0}, {0, 0}});
      return add(apply_matrix(g, linear_t, x), apply_matrix(g, cubic_t, mul(mul(x, x), x)));
    };
    return h;
  }
  if (id == "quadratic") {
    DynamicsHandle h;
    h.dimension = 1;
    h.f = [](const Vec& x) { return Vec{x[0] * x[0] - 4.0}; };
    h.tensor_f = [](Graph& g, Var x) {
      return sub(mul(x, x), g.constant(Tensor::scalar(4.0)));
    };
    return h;
  }
  throw std::invalid_argument("unknown dynamics id '" + std::string(id) + "'");
}

Matrix jacobian_fd(const DynamicsHandle& f, const Vec& x, double step) {
  const std::size_t n = f.dimension;
  Matrix j(n, n);
  Vec probe = x;
  for (std::size_t c = 0; c < n; ++c) {
    probe[c] = x[c] + step;
    const Vec plus = f(probe);
    probe[c] = x[c] - step;
    const Vec minus = f(probe);
    probe[c] = x[c];
    for (std::size_t r = 0; r < n; ++r) j(r, c) = (plus[r] - minus[r]) / (2.0 * step);
  }
  return j;
}

Matrix jacobian_autodiff(const DynamicsHandle& f, const Vec& x) {
  if (!f.tensor_f) throw std::invalid_argument("dynamics have no graph form");
  const std::size_t n = f.dimension;
  if (x.size() != n) throw std::invalid_argument("state dimension mismatch");
  Matrix j(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    Graph g;
    Var xv = g.leaf(Tensor({n}, x));
    Var y = f.tensor_f(g, xv);
    if (y.shape() != Shape{n}) {
      throw std::runtime_error("graph dynamics returned shape " + shape_string(y.shape()));
    }
    Tensor e({n}, 0.0);
    e[r] = 1.0;
    g.backward(sum(mul(y, g.constant(e))));
    const Tensor& grad = g.grad(xv.id);
    for (std::size_t c = 0; c < n; ++c) j(r, c) = grad[c];
  }
  return j;
}

Matrix jacobian(const DynamicsHandle& f, const Vec& x) {
  Matrix j = f.tensor_f ? jacobian_autodiff(f, x) : jacobian_fd(f, x);
  for (double v : j.data()) {
    if (!std::isfinite(v)) throw std::runtime_error("Jacobian has non-finite entries");
  }
  return j;
}

Vec find_equilibrium(const DynamicsHandle& f, Vec x, const NewtonOptions& options) {
  auto residual = [](const Vec& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  Vec fx = f(x);
  double res = residual(fx);
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    if (res < options.tolerance) return x;
    const Matrix j = jacobian_fd(f, x, options.fd_step);
    const linalg::LuFactors lu = linalg::lu_factor(j);
    const double cond = linalg::condition_estimate(j);
    if (lu.singular || !(cond < 1e14)) {
      std::ostringstream msg;
      msg << "singular Jacobian at Newton iteration " << it
          << " (condition estimate " << cond << ")";
      throw std::runtime_error(msg.str());
    }
    Vec rhs(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) rhs[i] = -fx[i];
    const Vec delta = linalg::lu_solve(lu, rhs);
    double alpha = 1.0;
    Vec trial(x.size());
    Vec ftrial;
    double rtrial = 0.0;
    for (int halvings = 0; halvings < 40; ++halvings) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + alpha * delta[i];
      ftrial = f(trial);
      rtrial = residual(ftrial);
      if (rtrial < res) break;
      alpha *= 0.5;
    }
    x = trial;
    fx = std::move(ftrial);
    res = rtrial;
  }
  if (res < options.tolerance) return x;
  std::ostringstream msg;
  msg << "Newton did not converge in " << options.max_iterations
      << " iterations (residual " << res << ")";
  throw std::runtime_error(msg.str());
}

std::vector<Complex> damp(const std::vector<Complex>& raw, double lambda, double rho_value) {
  std::vector<Complex> out;
  out.reserve(raw.size());
  for (const Complex& nu : raw) {
    out.emplace_back(rho_value * nu.real() - lambda, rho_value * nu.imag());
  }
  linalg::sort_spectrum(out);
  return out;
}

std::vector<Complex> damped_spectrum(const Matrix& j, double lambda, ode::RhoKind rho) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  return damp(linalg::eigenvalues(j), lambda, ode::rho(rho, lambda));
}

Frontier rho_stability_frontier(Complex nu, double lambda, double rho_value) {
  if (nu.real() == 0.0) {
    throw std::invalid_argument("frontier undefined for Re(nu) = 0");
  }
  Frontier fr;
  fr.bound = 1.0 + lambda / nu.real();
  fr.rho_below_bound = rho_value < fr.bound;
  fr.satisfied = rho_value * nu.real() - lambda < nu.real();
  return fr;
}

double max_real(const std::vector<Complex>& spectrum) {
  if (spectrum.empty()) throw std::invalid_argument("empty spectrum");
  double m = spectrum.front().real();
  for (const auto& v : spectrum) m = std::max(m, v.real());
  return m;
}

StabilityReport analyze_jacobian(Vec equilibrium, Matrix j, double lambda,
                                 ode::RhoKind rho) {
  StabilityReport r;
  r.lambda = lambda;
  r.rho = rho;
  r.equilibrium = std::move(equilibrium);
  r.raw_spectrum = linalg::eigenvalues(j);
  r.damped_spectrum = damp(r.raw_spectrum, lambda, ode::rho(rho, lambda));
  r.jacobian = std::move(j);
  r.max_re_raw = max_real(r.raw_spectrum);
  r.max_re_damped = max_real(r.damped_spectrum);
  r.stable_raw = r.max_re_raw < 0.0;
  r.stable_damped = r.max_re_damped < 0.0;
  return r;
}

StabilityReport analyze(const DynamicsHandle& f, const Vec& x_init, double lambda,
                        ode::RhoKind rho) {
  Vec eq = find_equilibrium(f, x_init);
  Matrix j = jacobian(f, eq);
  return analyze_jacobian(std::move(eq), std::move(j), lambda, rho);
}

nlohmann::json to_json(const StabilityReport& r) {
  auto spectrum = [](const std::vector<Complex>& s) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : s) arr.push_back({v.real(), v.imag()});
    return arr;
  };
  nlohmann::json jac = nlohmann::json::array();
  for (std::size_t i = 0; i < r.jacobian.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < r.jacobian.cols(); ++k) row.push_back(r.jacobian(i, k));
    jac.push_back(row);
  }
  return {
      {"lambda", r.lambda},
      {"rho", std::string(ode::to_string(r.rho))},
      {"equilibrium", r.equilibrium},
      {"jacobian", jac},
      {"raw_spectrum", spectrum(r.raw_spectrum)},
      {"damped_spectrum", spectrum(r.damped_spectrum)},
      {"max_re_raw", r.max_re_raw},
      {"max_re_damped", r.max_re_damped},
      {"stable_raw", r.stable_raw},
      {"stable_damped", r.stable_damped},
  };
}

std::vector<double> parse_polynomial(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  if (s.empty()) throw std::invalid_argument("empty polynomial");
  std::vector<double> by_power;
  std::size_t i = 0;
  auto fail = [&]() {
    throw std::invalid_argument("cannot parse polynomial '" + std::string(text) + "'");
  };
  while (i < s.size()) {
    double sign = 1.0;
    if (s[i] == '+' || s[i] == '-') {
      sign = s[i] == '-' ? -1.0 : 1.0;
      ++i;
    } else if (i != 0) {
      fail();
    }
    std::size_t j = i;
    while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
    double coeff = 1.0;
    const bool has_number = j > i;
    if (has_number) coeff = parse_number(std::string_view(s).substr(i, j - i));
    i = j;
    if (i < s.size() && s[i] == '*') ++i;
    std::size_t power = 0;
    if (i < s.size() && (s[i] == 'z' || s[i] == 'x')) {
      ++i;
      power = 1;
      if (i < s.size() && s[i] == '^') {
        ++i;
        std::size_t k = i;
        while (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) ++k;
        if (k == i) fail();
        power = static_cast<std::size_t>(parse_number(std::string_view(s).substr(i, k - i)));
        i = k;
      }
    } else if (!has_number) {
      fail();
    }
    if (by_power.size() <= power) by_power.resize(power + 1, 0.0);
    by_power[power] += sign * coeff;
  }
  while (!by_power.empty() && by_power.back() == 0.0) by_power.pop_back();
  if (by_power.size() < 2) throw std::invalid_argument("polynomial has degree < 1");
  const double lead = by_power.back();
  std::vector<double> monic(by_power.size() - 1);
  for (std::size_t k = 0; k < monic.size(); ++k) monic[k] = by_power[k] / lead;
  return monic;
}

Matrix parse_matrix(std::string_view text) {
  if (text.starts_with("companion:")) {
    return linalg::companion(parse_polynomial(text.substr(10)));
  }
  if (text.starts_with("diag:")) {
    const auto cells = split(text.substr(5), ',');
    Matrix m(cells.size(), cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) m(i, i) = parse_number(cells[i]);
    return m;
  }
  if (text.starts_with("rows:")) {
    Matrix m = parse_rows(text.substr(5));
    if (!m.square()) throw std::invalid_argument("matrix must be square");
    return m;
  }
  throw std::invalid_argument("unknown matrix source '" + std::string(text) +
                              "' (expected companion:, diag: or rows:)");
}

}  // namespace donet::stability
