#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace netfex {

/// Canonical term string -> coefficient. The constant term is "1".
using TermMap = std::map<std::string, double>;

/// Product of variable powers and opaque atoms such as "sigmoid(xj1)".
struct Monomial {
    std::vector<std::uint16_t> powers;
    std::vector<std::string> atoms; // sorted multiset

    std::size_t degree() const;
    bool is_constant() const { return degree() == 0 && atoms.empty(); }

    friend bool operator==(const Monomial&, const Monomial&) = default;
};

/// Monomial order: total degree, then higher power on lower variable
/// index first, then atoms.
struct MonomialLess {
    bool operator()(const Monomial& a, const Monomial& b) const;
};

std::string render_monomial(const Monomial& m, std::span<const std::string> names);

/// Sparse multivariate polynomial whose "variables" may include atoms.
class Polynomial {
public:
    explicit Polynomial(std::size_t n_vars = 0) : n_vars_(n_vars) {}

    static Polynomial constant(std::size_t n_vars, double c);
    static Polynomial variable(std::size_t n_vars, std::size_t index, double coef = 1.0);
    static Polynomial atom(std::size_t n_vars, std::string name, double coef = 1.0);

    std::size_t n_vars() const noexcept { return n_vars_; }
    std::size_t size() const noexcept { return terms_.size(); }
    const std::map<Monomial, double, MonomialLess>& terms() const noexcept { return terms_; }

    Polynomial& operator+=(const Polynomial& o);
    Polynomial& operator-=(const Polynomial& o);
    Polynomial& scale(double s);
    Polynomial& add_constant(double c);
    void add_term(const Monomial& m, double coef);

    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b);

    Polynomial pow(unsigned k) const;

    /// Removes exactly-zero coefficients.
    void drop_zeros();

    /// Human-readable sum, e.g. "0.5*x1 - 2*x2^2 + 0.1"; used inside atoms.
    std::string render(std::span<const std::string> names) const;

    TermMap to_terms(std::span<const std::string> names) const;

    /// Numeric value at x. Throws ParameterError if any term holds an atom.
    double evaluate(std::span<const double> x) const;

private:
    std::size_t n_vars_;
    std::map<Monomial, double, MonomialLess> terms_;
};

/// Number of monomials of (sum of n terms)^k, an upper bound on expansion size.
double expansion_size(std::size_t n_terms, unsigned k);

/// Coefficient formatting shared by atom rendering and reports.
std::string format_coefficient(double c);

} // namespace netfex
