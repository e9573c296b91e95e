#include "pamenc/poly_approx.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pamenc/controller_original.hpp"

namespace pamenc {
namespace {

constexpr std::array<std::string_view, kVariableCount> kVariableNames{"theta", "Kref", "P1", "P2"};
constexpr std::array<std::string_view, kTargetCount> kTargetNames{"f1", "f2", "f3", "f4", "f5"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

Monomial mono(int theta, int K, int P1, int P2) { return Monomial{{theta, K, P1, P2}}; }

std::vector<double> axis_values(const Axis& a) {
  if (a.lo == a.hi) return {a.lo};
  if (a.points < 2 || !(a.lo < a.hi)) throw DomainError("sampling axis needs lo < hi and at least 2 points");
  std::vector<double> v(static_cast<std::size_t>(a.points));
  for (int i = 0; i < a.points; ++i) v[static_cast<std::size_t>(i)] = a.lo + (a.hi - a.lo) * i / (a.points - 1);
  return v;
}

// Calls fn(point, interior) over the tensor grid of the relevant axes.
template <typename Fn>
void for_each_grid_point(Target t, const SamplingBox& box, Fn&& fn) {
  const auto& theta_axis = box.axes[0];
  if (std::max(std::abs(theta_axis.lo), std::abs(theta_axis.hi)) >= std::numbers::pi / 2) {
    throw DomainError("sampling box reaches cos(theta) = 0");
  }
  Point mid{};
  for (std::size_t v = 0; v < kVariableCount; ++v) mid[v] = 0.5 * (box.axes[v].lo + box.axes[v].hi);

  const auto vars = relevant_variables(t);
  std::vector<std::vector<double>> values;
  for (auto v : vars) values.push_back(axis_values(box.axes[static_cast<std::size_t>(v)]));

  std::vector<std::size_t> idx(vars.size(), 0);
  while (true) {
    Point p = mid;
    bool interior = true;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      p[static_cast<std::size_t>(vars[k])] = values[k][idx[k]];
      if (values[k].size() > 1 && (idx[k] == 0 || idx[k] + 1 == values[k].size())) interior = false;
    }
    fn(p, interior);
    std::size_t k = vars.size();
    while (k > 0) {
      --k;
      if (++idx[k] < values[k].size()) break;
      idx[k] = 0;
      if (k == 0) return;
    }
    if (vars.empty()) return;
  }
}

double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

std::vector<Term> fit_terms(const Dataset& data, const std::vector<Monomial>& monomials, double lambda,
                            TargetFit& report) {
  std::vector<std::size_t> feature_of;
  std::vector<std::vector<double>> X;
  for (std::size_t m = 0; m < monomials.size(); ++m) {
    if (monomials[m].is_constant()) continue;
    std::vector<double> col(data.inputs.size());
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = monomials[m].eval(data.inputs[i]);
    X.push_back(std::move(col));
    feature_of.push_back(m);
  }
  report.lasso = lasso_fit(X, data.y, lambda);
  report.rows = data.y.size();

  std::vector<Term> terms;
  for (std::size_t m = 0; m < monomials.size(); ++m) {
    double value = 0.0;
    if (monomials[m].is_constant()) {
      value = report.lasso.intercept;
    } else {
      const auto pos = std::find(feature_of.begin(), feature_of.end(), m) - feature_of.begin();
      value = report.lasso.weights[static_cast<std::size_t>(pos)];
    }
    terms.push_back({monomials[m], value});
  }
  return terms;
}

}  // namespace

Monomial Monomial::parse(std::string_view text) {
  Monomial m;
  text = trim(text);
  if (text == "1") return m;
  if (text.empty()) throw ParameterError("empty monomial");
  while (!text.empty()) {
    const auto star = text.find('*');
    std::string_view factor = trim(text.substr(0, star));
    text = star == std::string_view::npos ? std::string_view{} : text.substr(star + 1);

    int power = 1;
    const auto caret = factor.find('^');
    if (caret != std::string_view::npos) {
      const auto digits = trim(factor.substr(caret + 1));
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), power);
      if (ec != std::errc{} || ptr != digits.data() + digits.size() || power < 1) {
        throw ParameterError("bad exponent in monomial factor '" + std::string(factor) + "'");
      }
      factor = trim(factor.substr(0, caret));
    }
    const auto it = std::find(kVariableNames.begin(), kVariableNames.end(), factor);
    if (it == kVariableNames.end()) throw ParameterError("unknown variable '" + std::string(factor) + "'");
    m.exponent[static_cast<std::size_t>(it - kVariableNames.begin())] += power;
  }
  return m;
}

std::string Monomial::name() const {
  std::string out;
  for (std::size_t v = 0; v < kVariableCount; ++v) {
    if (exponent[v] == 0) continue;
    if (!out.empty()) out += '*';
    out += kVariableNames[v];
    if (exponent[v] > 1) out += '^' + std::to_string(exponent[v]);
  }
  return out.empty() ? "1" : out;
}

double Monomial::eval(const Point& x) const {
  double r = 1.0;
  for (std::size_t v = 0; v < kVariableCount; ++v) {
    for (int k = 0; k < exponent[v]; ++k) r *= x[v];
  }
  return r;
}

bool Monomial::is_constant() const {
  return std::all_of(exponent.begin(), exponent.end(), [](int e) { return e == 0; });
}

std::string_view target_name(Target t) { return kTargetNames[static_cast<std::size_t>(t)]; }

Target parse_target(std::string_view name) {
  const auto it = std::find(kTargetNames.begin(), kTargetNames.end(), trim(name));
  if (it == kTargetNames.end()) throw ParameterError("unknown target '" + std::string(name) + "'");
  return static_cast<Target>(it - kTargetNames.begin());
}

double target_value(Target t, const Point& x, const PamParams& params) {
  const auto f = rational_terms(x[0], x[2], x[3], x[1], params);
  switch (t) {
    case Target::f1: return f.f1;
    case Target::f2: return f.f2;
    case Target::f3: return f.f3;
    case Target::f4: return f.f4;
    case Target::f5: return f.f5;
  }
  return 0.0;
}

SamplingBox SamplingBox::with_density(int points) {
  SamplingBox box;
  for (auto& a : box.axes) a.points = points;
  return box;
}

std::vector<Variable> relevant_variables(Target t) {
  switch (t) {
    case Target::f1: return {Variable::theta, Variable::Kref};
    case Target::f2: return {Variable::theta};
    case Target::f3: return {Variable::theta, Variable::P1};
    case Target::f4: return {Variable::theta, Variable::P2};
    case Target::f5: return {Variable::theta};
  }
  return {};
}

FeatureSpec default_feature_spec(int density) {
  FeatureSpec spec;
  spec.box = SamplingBox::with_density(density);
  for (const auto& slot : support_slots()) {
    spec.candidates[static_cast<std::size_t>(slot.target)].push_back(slot.monomial);
  }
  spec.candidates[static_cast<std::size_t>(Target::f3)].push_back(mono(1, 0, 2, 0));
  return spec;
}

Dataset sample_grid(Target t, const SamplingBox& box, const PamParams& params) {
  Dataset d;
  for_each_grid_point(t, box, [&](const Point& p, bool) {
    d.inputs.push_back(p);
    d.y.push_back(target_value(t, p, params));
  });
  return d;
}

LassoResult lasso_fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y, double lambda,
                      const LassoOptions& options) {
  if (!(lambda >= 0.0)) throw FitError("lasso: lambda must be non-negative");
  const std::size_t n = y.size();
  const std::size_t p = X.size();
  if (n == 0) throw FitError("lasso: no samples");
  for (const auto& col : X) {
    if (col.size() != n) throw FitError("lasso: feature column length does not match targets");
  }
  const double inv_n = 1.0 / static_cast<double>(n);

  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean *= inv_n;

  std::vector<double> mean(p, 0.0), sd(p, 0.0);
  std::vector<std::vector<double>> Z(p, std::vector<double>(n));
  for (std::size_t j = 0; j < p; ++j) {
    for (double v : X[j]) mean[j] += v;
    mean[j] *= inv_n;
    for (double v : X[j]) sd[j] += (v - mean[j]) * (v - mean[j]);
    sd[j] = std::sqrt(sd[j] * inv_n);
    if (sd[j] > 0.0) {
      for (std::size_t i = 0; i < n; ++i) Z[j][i] = (X[j][i] - mean[j]) / sd[j];
    }
  }

  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - y_mean;
  std::vector<double> beta(p, 0.0);

  LassoResult out;
  while (out.sweeps < options.max_sweeps) {
    ++out.sweeps;
    double max_step = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (sd[j] == 0.0) continue;
      double rho = 0.0;
      for (std::size_t i = 0; i < n; ++i) rho += Z[j][i] * resid[i];
      rho = rho * inv_n + beta[j];
      const double next = soft_threshold(rho, lambda);
      const double step = next - beta[j];
      if (step != 0.0) {
        for (std::size_t i = 0; i < n; ++i) resid[i] -= Z[j][i] * step;
        beta[j] = next;
      }
      max_step = std::max(max_step, std::abs(step));
    }
    if (max_step < options.tolerance) {
      out.converged = true;
      break;
    }
  }

  out.weights.assign(p, 0.0);
  out.intercept = y_mean;
  for (std::size_t j = 0; j < p; ++j) {
    if (sd[j] == 0.0) continue;
    out.weights[j] = beta[j] / sd[j];
    out.intercept -= out.weights[j] * mean[j];
  }
  return out;
}

double CoefficientTable::eval(Target t, const Point& x) const {
  double sum = 0.0;
  for (const auto& term : terms[static_cast<std::size_t>(t)]) sum += term.value * term.monomial.eval(x);
  return sum;
}

PruneResult prune(const CoefficientTable& table, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw FitError("prune threshold must lie in (0, 1)");
  PruneResult out;
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    // The constant term carries the offset of the target, not the size of a
    // feature effect, so it is neither a reference nor a pruning candidate.
    double max_abs = 0.0;
    for (const auto& term : table.terms[t]) {
      if (!term.monomial.is_constant()) max_abs = std::max(max_abs, std::abs(term.value));
    }
    for (const auto& term : table.terms[t]) {
      const bool small = !term.monomial.is_constant() && (std::abs(term.value) < threshold * max_abs || term.value == 0.0);
      if (small) {
        out.dropped.push_back({static_cast<Target>(t), term});
      } else {
        out.table.terms[t].push_back(term);
      }
    }
  }
  return out;
}

FitOutcome fit_rational_terms(const FeatureSpec& spec, const PamParams& params, double lambda,
                              double prune_threshold) {
  CoefficientTable first;
  std::array<Dataset, kTargetCount> data;
  FitOutcome out;
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    data[t] = sample_grid(static_cast<Target>(t), spec.box, params);
    first.terms[t] = fit_terms(data[t], spec.candidates[t], lambda, out.fits[t]);
  }
  auto pruned = prune(first, prune_threshold);
  out.dropped = std::move(pruned.dropped);
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    std::vector<Monomial> kept;
    for (const auto& term : pruned.table.terms[t]) kept.push_back(term.monomial);
    out.table.terms[t] = fit_terms(data[t], kept, lambda, out.fits[t]);
  }
  return out;
}

const std::vector<SupportSlot>& support_slots() {
  static const std::vector<SupportSlot> slots{
      {1, Target::f1, mono(0, 1, 0, 0)},  {2, Target::f1, mono(2, 1, 0, 0)},  {3, Target::f1, mono(0, 0, 0, 0)},
      {4, Target::f2, mono(1, 0, 0, 0)},  {5, Target::f2, mono(2, 0, 0, 0)},  {6, Target::f2, mono(0, 0, 0, 0)},
      {7, Target::f3, mono(0, 0, 1, 0)},  {8, Target::f3, mono(1, 0, 1, 0)},  {9, Target::f3, mono(0, 0, 0, 0)},
      {10, Target::f4, mono(0, 0, 0, 1)}, {11, Target::f4, mono(1, 0, 0, 1)}, {12, Target::f4, mono(0, 0, 0, 0)},
      {13, Target::f5, mono(2, 0, 0, 0)}, {14, Target::f5, mono(0, 0, 0, 0)},
  };
  return slots;
}

PolyCoeffs to_poly_coeffs(const CoefficientTable& table) {
  PolyCoeffs c;
  const auto& slots = support_slots();
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    for (const auto& term : table.terms[t]) {
      const bool in_support = std::any_of(slots.begin(), slots.end(), [&](const SupportSlot& s) {
        return static_cast<std::size_t>(s.target) == t && s.monomial == term.monomial;
      });
      if (!in_support) {
        if (term.value == 0.0) continue;
        throw FitError("term " + term.monomial.name() + " of " + std::string(kTargetNames[t]) +
                       " is outside the controller's polynomial support");
      }
    }
  }
  for (const auto& s : slots) {
    const auto& terms = table.terms[static_cast<std::size_t>(s.target)];
    const auto it = std::find_if(terms.begin(), terms.end(), [&](const Term& t) { return t.monomial == s.monomial; });
    if (it == terms.end()) {
      throw FitError("missing coefficient w" + std::to_string(s.index) + " (" + s.monomial.name() + " in " +
                     std::string(target_name(s.target)) + ")");
    }
    c(s.index) = it->value;
  }
  return c;
}

CoefficientTable to_table(const PolyCoeffs& coeffs) {
  CoefficientTable table;
  for (const auto& s : support_slots()) {
    table.terms[static_cast<std::size_t>(s.target)].push_back({s.monomial, coeffs(s.index)});
  }
  return table;
}

PolyCoeffs table2_poly_coeffs() {
  PolyCoeffs c;
  c.w = {-61.7, -1.89e-2, -1.58, 13.6, -1.24, 1.73e-3, -5.12e-1,
         -1.18e-3, 36.5, -4.31e-1, 1.54e-3, -9.35, -27.3, -3.92e-3};
  c.pruned = {"theta*P1^2"};
  return c;
}

double eval_fhat(int which, const PolyCoeffs& c, double theta, double Kp_ref, double P1, double P2) {
  const double th2 = theta * theta;
  switch (which) {
    case 1: return c(1) * Kp_ref + c(2) * th2 * Kp_ref + c(3);
    case 2: return c(4) * theta + c(5) * th2 + c(6);
    case 3: return c(7) * P1 + c(8) * theta * P1 + c(9);
    case 4: return c(10) * P2 + c(11) * theta * P2 + c(12);
    case 5: return c(13) * th2 + c(14);
    default: throw FitError("eval_fhat: target index must be 1..5");
  }
}

double approximation_error(Target t, const PolyCoeffs& c, const SamplingBox& box, const PamParams& params) {
  double max_err = 0.0;
  double max_ref = 0.0;
  const int which = static_cast<int>(t) + 1;
  for_each_grid_point(t, box, [&](const Point& p, bool interior) {
    if (!interior) return;
    const double f = target_value(t, p, params);
    max_err = std::max(max_err, std::abs(eval_fhat(which, c, p[0], p[1], p[2], p[3]) - f));
    max_ref = std::max(max_ref, std::abs(f));
  });
  if (max_ref == 0.0) throw FitError("approximation_error: no interior grid points");
  return max_err / max_ref;
}

std::string coefficients_csv(const CoefficientTable& table) {
  std::string out = "target,monomial,value\n";
  for (std::size_t t = 0; t < kTargetCount; ++t) {
    for (const auto& term : table.terms[t]) {
      out += std::string(kTargetNames[t]) + "," + term.monomial.name() + "," + format_double(term.value) + "\n";
    }
  }
  return out;
}

CoefficientTable parse_coefficients_csv(std::string_view text, const std::string& origin) {
  CoefficientTable table;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (header) {
      if (line != "target,monomial,value") throw ParameterError(where + ": expected header target,monomial,value");
      header = false;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos) throw ParameterError(where + ": expected three columns");
    Term term;
    Target target{};
    try {
      target = parse_target(line.substr(0, c1));
      term.monomial = Monomial::parse(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const ParameterError& e) {
      throw ParameterError(where + ": " + e.what());
    }
    const auto value = trim(line.substr(c2 + 1));
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), term.value);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
      throw ParameterError(where + ": bad coefficient value '" + std::string(value) + "'");
    }
    auto& terms = table.terms[static_cast<std::size_t>(target)];
    if (std::any_of(terms.begin(), terms.end(), [&](const Term& t) { return t.monomial == term.monomial; })) {
      throw ParameterError(where + ": duplicate term " + term.monomial.name());
    }
    terms.push_back(term);
  }
  if (header) throw ParameterError(origin + ": empty coefficient file");
  return table;
}

void write_coefficients_csv(const std::filesystem::path& path, const CoefficientTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << coefficients_csv(table);
  if (!out) throw ParameterError("write failed for " + path.string());
}

CoefficientTable read_coefficients_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_coefficients_csv(ss.str(), path.string());
}

}  // namespace pamenc
