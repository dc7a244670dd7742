#include "netfex/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "netfex/error.hpp"

namespace netfex {

std::size_t Monomial::degree() const
{
    return std::accumulate(powers.begin(), powers.end(), std::size_t{0});
}

bool MonomialLess::operator()(const Monomial& a, const Monomial& b) const
{
    auto da = a.degree() + a.atoms.size();
    auto db = b.degree() + b.atoms.size();
    if (da != db) return da < db;
    if (a.powers != b.powers) {
        return std::lexicographical_compare(a.powers.begin(), a.powers.end(), b.powers.begin(), b.powers.end(),
                                            std::greater<>{});
    }
    return a.atoms < b.atoms;
}

std::string render_monomial(const Monomial& m, std::span<const std::string> names)
{
    std::string out;
    auto append = [&](const std::string& piece) {
        if (!out.empty()) out += '*';
        out += piece;
    };
    for (std::size_t k = 0; k < m.powers.size(); ++k) {
        if (m.powers[k] == 0) continue;
        std::string name = k < names.size() ? names[k] : "x" + std::to_string(k + 1);
        if (m.powers[k] > 1) name += "^" + std::to_string(m.powers[k]);
        append(name);
    }
    for (const auto& a : m.atoms) append(a);
    return out.empty() ? "1" : out;
}

std::string format_coefficient(double c)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", c);
    return buf;
}

Polynomial Polynomial::constant(std::size_t n_vars, double c)
{
    Polynomial p(n_vars);
    p.add_term(Monomial{std::vector<std::uint16_t>(n_vars, 0), {}}, c);
    return p;
}

Polynomial Polynomial::variable(std::size_t n_vars, std::size_t index, double coef)
{
    Polynomial p(n_vars);
    Monomial m{std::vector<std::uint16_t>(n_vars, 0), {}};
    m.powers[index] = 1;
    p.add_term(m, coef);
    return p;
}

Polynomial Polynomial::atom(std::size_t n_vars, std::string name, double coef)
{
    Polynomial p(n_vars);
    p.add_term(Monomial{std::vector<std::uint16_t>(n_vars, 0), {std::move(name)}}, coef);
    return p;
}

void Polynomial::add_term(const Monomial& m, double coef)
{
    terms_[m] += coef;
}

Polynomial& Polynomial::operator+=(const Polynomial& o)
{
    for (const auto& [m, c] : o.terms_) terms_[m] += c;
    return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o)
{
    for (const auto& [m, c] : o.terms_) terms_[m] -= c;
    return *this;
}

Polynomial& Polynomial::scale(double s)
{
    for (auto& [m, c] : terms_) c *= s;
    return *this;
}

Polynomial& Polynomial::add_constant(double c)
{
    add_term(Monomial{std::vector<std::uint16_t>(n_vars_, 0), {}}, c);
    return *this;
}

Polynomial operator*(const Polynomial& a, const Polynomial& b)
{
    Polynomial out(a.n_vars_);
    for (const auto& [ma, ca] : a.terms_) {
        for (const auto& [mb, cb] : b.terms_) {
            Monomial m{ma.powers, ma.atoms};
            for (std::size_t k = 0; k < m.powers.size(); ++k) m.powers[k] += mb.powers[k];
            m.atoms.insert(m.atoms.end(), mb.atoms.begin(), mb.atoms.end());
            std::sort(m.atoms.begin(), m.atoms.end());
            out.terms_[m] += ca * cb;
        }
    }
    return out;
}

Polynomial Polynomial::pow(unsigned k) const
{
    Polynomial out = constant(n_vars_, 1.0);
    for (unsigned i = 0; i < k; ++i) out = out * *this;
    return out;
}

void Polynomial::drop_zeros()
{
    std::erase_if(terms_, [](const auto& kv) { return kv.second == 0.0; });
}

std::string Polynomial::render(std::span<const std::string> names) const
{
    std::string out;
    for (const auto& [m, c] : terms_) {
        if (c == 0.0) continue;
        std::string body = render_monomial(m, names);
        double mag = std::abs(c);
        std::string piece;
        if (m.is_constant()) {
            piece = format_coefficient(mag);
        } else if (mag == 1.0) {
            piece = body;
        } else {
            piece = format_coefficient(mag) + "*" + body;
        }
        if (out.empty()) {
            out = (c < 0 ? "-" : "") + piece;
        } else {
            out += (c < 0 ? " - " : " + ") + piece;
        }
    }
    return out.empty() ? "0" : out;
}

TermMap Polynomial::to_terms(std::span<const std::string> names) const
{
    TermMap out;
    for (const auto& [m, c] : terms_) {
        if (c != 0.0) out[render_monomial(m, names)] += c;
    }
    return out;
}

double Polynomial::evaluate(std::span<const double> x) const
{
    if (x.size() != n_vars_) throw ParameterError("polynomial input dimension mismatch");
    double sum = 0.0;
    for (const auto& [m, c] : terms_) {
        if (!m.atoms.empty()) throw ParameterError("cannot evaluate a polynomial holding atoms");
        double v = c;
        for (std::size_t k = 0; k < n_vars_; ++k) {
            for (unsigned p = 0; p < m.powers[k]; ++p) v *= x[k];
        }
        sum += v;
    }
    return sum;
}

double expansion_size(std::size_t n_terms, unsigned k)
{
    // C(n + k - 1, k)
    double r = 1.0;
    for (unsigned i = 1; i <= k; ++i) r = r * static_cast<double>(n_terms + i - 1) / i;
    return r;
}

} // namespace netfex
