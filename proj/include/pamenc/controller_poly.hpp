#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pamenc/controller_original.hpp"
#include "pamenc/poly_approx.hpp"

namespace pamenc {

inline constexpr std::size_t kPsiSize = 5;
inline constexpr std::size_t kXiSize = 18;

// [K, K th^2, thr, th, xth, thr th, th^2, xth th, thr th^2, th^3, xth th^2,
//  P1, th P1, P2, th P2, 1, xF1, xF2]; accessors are 1-based.
struct XiVector {
  std::array<double, kXiSize> v{};

  double operator()(std::size_t i) const { return v.at(i - 1); }
  double& operator()(std::size_t i) { return v.at(i - 1); }
};

// Rows [xth+, xF1+, xF2+, u1, u2]; accessors are 1-based.
struct PhiMatrix {
  std::array<std::array<double, kXiSize>, kPsiSize> m{};

  double operator()(std::size_t i, std::size_t j) const { return m.at(i - 1).at(j - 1); }
  double& operator()(std::size_t i, std::size_t j) { return m.at(i - 1).at(j - 1); }
  bool operator==(const PhiMatrix&) const = default;
};

using Psi = std::array<double, kPsiSize>;

std::string_view xi_label(std::size_t i);  // 1-based

XiVector build_xi(const ControllerInput& zin, const ControllerState& state);

// Collects the polynomial controller's coefficients symbolically, so that
// poly_step(build_phi(...), build_xi(...)) reproduces approx_step().
PhiMatrix build_phi(const PolyCoeffs& coeffs, const PamParams& pam, const Gains& gains);

Psi poly_step(const PhiMatrix& phi, const XiVector& xi);

// Dynamic-size variant; throws std::invalid_argument unless phi is 5x18 and xi has 18 entries.
std::vector<double> poly_step(const std::vector<std::vector<double>>& phi, const std::vector<double>& xi);

// psi -> next state and (clamped) valve commands.
ControllerOutput output_from_psi(const ControllerState& prev, const Psi& psi, const Gains& gains);

// Straight-line evaluation of the polynomial controller.
ControllerOutput approx_step(const ControllerState& state, const ControllerInput& zin, const PolyCoeffs& coeffs,
                             const PamParams& pam, const Gains& gains);

// Five lines of 18 comma-separated values, no header.
std::string phi_csv(const PhiMatrix& phi);
PhiMatrix parse_phi_csv(std::string_view text, const std::string& origin = "<string>");
void write_phi_csv(const std::filesystem::path& path, const PhiMatrix& phi);
PhiMatrix read_phi_csv(const std::filesystem::path& path);

}  // namespace pamenc
