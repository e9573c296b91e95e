#include "pamenc/controller_poly.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pamenc {
namespace {

// Polynomials over (K, thr, th, xth, P1, P2, xF1, xF2).
constexpr std::size_t kSymbols = 8;
using Exponents = std::array<int, kSymbols>;

enum Symbol : std::size_t { K = 0, THR, TH, XTH, P1, P2, XF1, XF2 };

class Poly {
 public:
  Poly() = default;
  explicit Poly(double c) {
    if (c != 0.0) terms_[Exponents{}] = c;
  }
  static Poly var(Symbol s) {
    Poly p;
    Exponents e{};
    e[s] = 1;
    p.terms_[e] = 1.0;
    return p;
  }

  friend Poly operator+(Poly a, const Poly& b) {
    for (const auto& [e, c] : b.terms_) a.terms_[e] += c;
    return a;
  }
  friend Poly operator-(const Poly& a, const Poly& b) { return a + b * -1.0; }
  friend Poly operator*(const Poly& a, double s) {
    Poly out;
    for (const auto& [e, c] : a.terms_) out.terms_[e] = c * s;
    return out;
  }
  friend Poly operator*(double s, const Poly& a) { return a * s; }
  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly out;
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) {
        Exponents e{};
        for (std::size_t i = 0; i < kSymbols; ++i) e[i] = ea[i] + eb[i];
        out.terms_[e] += ca * cb;
      }
    }
    return out;
  }

  const std::map<Exponents, double>& terms() const { return terms_; }

 private:
  std::map<Exponents, double> terms_;
};

Exponents ex(int k, int thr, int th, int xth, int p1, int p2, int xf1, int xf2) {
  return {k, thr, th, xth, p1, p2, xf1, xf2};
}

const std::array<Exponents, kXiSize>& xi_exponents() {
  static const std::array<Exponents, kXiSize> table{
      ex(1, 0, 0, 0, 0, 0, 0, 0), ex(1, 0, 2, 0, 0, 0, 0, 0), ex(0, 1, 0, 0, 0, 0, 0, 0),
      ex(0, 0, 1, 0, 0, 0, 0, 0), ex(0, 0, 0, 1, 0, 0, 0, 0), ex(0, 1, 1, 0, 0, 0, 0, 0),
      ex(0, 0, 2, 0, 0, 0, 0, 0), ex(0, 0, 1, 1, 0, 0, 0, 0), ex(0, 1, 2, 0, 0, 0, 0, 0),
      ex(0, 0, 3, 0, 0, 0, 0, 0), ex(0, 0, 2, 1, 0, 0, 0, 0), ex(0, 0, 0, 0, 1, 0, 0, 0),
      ex(0, 0, 1, 0, 1, 0, 0, 0), ex(0, 0, 0, 0, 0, 1, 0, 0), ex(0, 0, 1, 0, 0, 1, 0, 0),
      ex(0, 0, 0, 0, 0, 0, 0, 0), ex(0, 0, 0, 0, 0, 0, 1, 0), ex(0, 0, 0, 0, 0, 0, 0, 1),
  };
  return table;
}

constexpr std::array<std::string_view, kXiSize> kXiLabels{
    "Kref", "Kref*theta^2", "theta_ref", "theta", "x_theta", "theta_ref*theta",
    "theta^2", "x_theta*theta", "theta_ref*theta^2", "theta^3", "x_theta*theta^2", "P1",
    "theta*P1", "P2", "theta*P2", "1", "x_F1", "x_F2"};

std::array<double, kXiSize> collect(const Poly& p, std::size_t row) {
  std::array<double, kXiSize> out{};
  const auto& table = xi_exponents();
  for (const auto& [e, c] : p.terms()) {
    const auto it = std::find(table.begin(), table.end(), e);
    if (it == table.end()) {
      if (c == 0.0) continue;
      throw std::logic_error("controller row " + std::to_string(row) + " has a monomial outside xi");
    }
    out[static_cast<std::size_t>(it - table.begin())] += c;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view xi_label(std::size_t i) { return kXiLabels.at(i - 1); }

XiVector build_xi(const ControllerInput& zin, const ControllerState& state) {
  const double th = zin.theta;
  const double th2 = th * th;
  const double thr = zin.theta_ref;
  const double xth = state.x_theta;
  XiVector xi;
  xi.v = {zin.Kp_ref, zin.Kp_ref * th2, thr, th, xth, thr * th, th2, xth * th, thr * th2, th2 * th,
          xth * th2, zin.P1, th * zin.P1, zin.P2, th * zin.P2, 1.0, state.x_F1, state.x_F2};
  return xi;
}

PhiMatrix build_phi(const PolyCoeffs& w, const PamParams& pam, const Gains& gains) {
  const Poly k = Poly::var(K), thr = Poly::var(THR), th = Poly::var(TH), xth = Poly::var(XTH);
  const Poly p1 = Poly::var(P1), p2 = Poly::var(P2), xf1 = Poly::var(XF1), xf2 = Poly::var(XF2);
  const Poly one(1.0);
  const Poly th2 = th * th;

  const Poly f1 = w(1) * k + w(2) * th2 * k + Poly(w(3));
  const Poly f2 = w(4) * th + w(5) * th2 + Poly(w(6));
  const Poly f3 = w(7) * p1 + w(8) * th * p1 + Poly(w(9));
  const Poly f4 = w(10) * p2 + w(11) * th * p2 + Poly(w(12));
  const Poly f5 = w(13) * th2 + Poly(w(14));

  const auto& e1 = pam.estimator_of(Muscle::first);
  const auto& e2 = pam.estimator_of(Muscle::second);
  const Poly Fhat1 = (e1.p_ahat1 * th + Poly(e1.p_ahat2)) * p1 + e1.p_bhat1 * th + Poly(e1.p_bhat2);
  const Poly Fhat2 = (e2.p_ahat1 * th + Poly(e2.p_ahat2)) * p2 + e2.p_bhat1 * th + Poly(e2.p_bhat2);

  const Poly err = thr - th;
  const Poly h1 = f1 + gains.Gp_theta * f2 * err + f3 + f4 - Fhat1;
  const Poly h2 = f1 + f3 + f4 + gains.Gp_theta * (f2 + f5) * err - Fhat2;
  const double Ts = gains.Ts;

  const std::array<Poly, kPsiSize> rows{
      xth + Ts * err,
      xf1 + Ts * gains.Gi_theta * f2 * xth + Ts * h1,
      xf2 + Ts * gains.Gi_theta * (f2 + f5) * xth + Ts * h2,
      gains.Gp_F * gains.Gi_theta * f2 * xth + gains.Gi_F * xf1 + gains.Gp_F * h1 + Poly(gains.beta1),
      gains.Gp_F * gains.Gi_theta * (f2 + f5) * xth + gains.Gi_F * xf2 + gains.Gp_F * h2 + Poly(gains.beta2),
  };
  PhiMatrix phi;
  for (std::size_t i = 0; i < kPsiSize; ++i) phi.m[i] = collect(rows[i], i + 1);
  return phi;
}

Psi poly_step(const PhiMatrix& phi, const XiVector& xi) {
  Psi psi{};
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < kXiSize; ++j) s += phi.m[i][j] * xi.v[j];
    psi[i] = s;
  }
  return psi;
}

std::vector<double> poly_step(const std::vector<std::vector<double>>& phi, const std::vector<double>& xi) {
  if (phi.size() != kPsiSize || xi.size() != kXiSize) {
    throw std::invalid_argument("poly_step expects a 5x18 matrix and an 18-vector");
  }
  std::vector<double> psi(kPsiSize, 0.0);
  for (std::size_t i = 0; i < kPsiSize; ++i) {
    if (phi[i].size() != kXiSize) throw std::invalid_argument("poly_step: row " + std::to_string(i + 1) + " is not 18 wide");
    for (std::size_t j = 0; j < kXiSize; ++j) psi[i] += phi[i][j] * xi[j];
  }
  return psi;
}

ControllerOutput output_from_psi(const ControllerState& prev, const Psi& psi, const Gains& gains) {
  return finish_step(prev, {psi[0], psi[1], psi[2]}, {psi[3], psi[4]}, gains);
}

ControllerOutput approx_step(const ControllerState& state, const ControllerInput& zin, const PolyCoeffs& c,
                             const PamParams& pam, const Gains& gains) {
  const double th = zin.theta;
  const double f1 = eval_fhat(1, c, th, zin.Kp_ref, zin.P1, zin.P2);
  const double f2 = eval_fhat(2, c, th, zin.Kp_ref, zin.P1, zin.P2);
  const double f3 = eval_fhat(3, c, th, zin.Kp_ref, zin.P1, zin.P2);
  const double f4 = eval_fhat(4, c, th, zin.Kp_ref, zin.P1, zin.P2);
  const double f5 = eval_fhat(5, c, th, zin.Kp_ref, zin.P1, zin.P2);
  const double e = zin.theta_ref - th;
  const double Fhat1 = estimate_force(th, zin.P1, Muscle::first, pam);
  const double Fhat2 = estimate_force(th, zin.P2, Muscle::second, pam);

  const double h1 = f1 + gains.Gp_theta * f2 * e + f3 + f4 - Fhat1;
  const double h2 = f1 + f3 + f4 + gains.Gp_theta * (f2 + f5) * e - Fhat2;
  const double a21 = gains.Gi_theta * f2;
  const double a31 = gains.Gi_theta * (f2 + f5);

  const double Ts = gains.Ts;
  const ControllerState next{state.x_theta + Ts * e, state.x_F1 + Ts * a21 * state.x_theta + Ts * h1,
                             state.x_F2 + Ts * a31 * state.x_theta + Ts * h2};
  const double u1 = gains.Gp_F * a21 * state.x_theta + gains.Gi_F * state.x_F1 + gains.Gp_F * h1 + gains.beta1;
  const double u2 = gains.Gp_F * a31 * state.x_theta + gains.Gi_F * state.x_F2 + gains.Gp_F * h2 + gains.beta2;
  return finish_step(state, next, {u1, u2}, gains);
}

std::string phi_csv(const PhiMatrix& phi) {
  std::string out;
  for (const auto& row : phi.m) {
    for (std::size_t j = 0; j < kXiSize; ++j) {
      if (j) out += ',';
      out += format_double(row[j]);
    }
    out += '\n';
  }
  return out;
}

PhiMatrix parse_phi_csv(std::string_view text, const std::string& origin) {
  PhiMatrix phi;
  std::size_t row = 0;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (row == kPsiSize) throw ParameterError(where + ": more than 5 rows");
    std::size_t col = 0;
    while (true) {
      const auto comma = line.find(',');
      const auto cell = trim(line.substr(0, comma));
      if (col == kXiSize) throw ParameterError(where + ": more than 18 columns");
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParameterError(where + ": bad number '" + std::string(cell) + "'");
      }
      phi.m[row][col++] = v;
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (col != kXiSize) throw ParameterError(where + ": expected 18 columns");
    ++row;
  }
  if (row != kPsiSize) throw ParameterError(origin + ": expected 5 rows");
  return phi;
}

void write_phi_csv(const std::filesystem::path& path, const PhiMatrix& phi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << phi_csv(phi);
  if (!out) throw ParameterError("write failed for " + path.string());
}

PhiMatrix read_phi_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_phi_csv(ss.str(), path.string());
}

}  // namespace pamenc
