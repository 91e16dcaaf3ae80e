#pragma once

namespace cowmask {

/// Inverse of the error function on (-1, 1).
///
/// Rational initial guess followed by Newton refinement against std::erf;
/// accurate to a few ulps of the argument's conditioning. Throws DomainError
/// for |y| >= 1 or NaN.
double inverse_erf(double y);

/// Inverse standard normal CDF for p in (0, 1) (Acklam's rational
/// approximation, relative error below 1.2e-9). Used for noise generation,
/// where speed matters more than the last digits.
double normal_quantile(double p) noexcept;

}  // namespace cowmask
