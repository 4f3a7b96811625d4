#include "carr/distributions.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>

namespace carr {

bool Gb2Params::valid() const {
    return a != 0.0 && std::isfinite(a) && b > 0.0 && p > 0.0 && q > 0.0 && std::isfinite(b) &&
           std::isfinite(p) && std::isfinite(q);
}

void Gb2Params::validate() const {
    if (!valid()) throw std::invalid_argument("GB2 requires a != 0 and b, p, q > 0");
}

bool Gb2Params::has_moment(double h) const { return p + h / a > 0.0 && q - h / a > 0.0; }

double Gb2Params::moment(double h) const {
    validate();
    if (!has_moment(h)) throw std::domain_error("GB2 moment of this order does not exist");
    return std::exp(h * std::log(b) + log_beta(p + h / a, q - h / a) - log_beta(p, q));
}

double log_beta(double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); }

double gb2_logpdf(double x, const Gb2Params& g) {
    g.validate();
    if (!(x > 0.0)) throw std::domain_error("GB2 density is defined for x > 0");
    const double log_ratio = std::log(x) - std::log(g.b);
    // log(1 + exp(a * log_ratio)) without overflow
    const double s = g.a * log_ratio;
    const double log1p_term = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
    return std::log(std::abs(g.a)) + (g.a * g.p - 1.0) * std::log(x) - g.a * g.p * std::log(g.b) -
           log_beta(g.p, g.q) - (g.p + g.q) * log1p_term;
}

double gb2_cdf(double x, const Gb2Params& g) {
    g.validate();
    if (!(x > 0.0)) return 0.0;
    const double s = g.a * (std::log(x) - std::log(g.b));
    // z = (x/b)^a / (1 + (x/b)^a); a negative a swaps the roles of p and q
    const double z = 1.0 / (1.0 + std::exp(-s));
    return g.a > 0.0 ? boost::math::ibeta(g.p, g.q, z) : boost::math::ibetac(g.p, g.q, z);
}

double gb2_mean(const Gb2Params& params) { return params.moment(1.0); }

Gb2Params standardize_gb2(double a, double p, double q) {
    Gb2Params g{a, 1.0, p, q};
    g.validate();
    if (!g.has_moment(1.0)) throw std::domain_error("GB2 mean does not exist for these shapes");
    g.b = std::exp(log_beta(p, q) - log_beta(p + 1.0 / a, q - 1.0 / a));
    return g;
}

std::vector<double> gb2_sample(const Gb2Params& params, std::size_t n, std::uint64_t seed) {
    return ErrorDistribution(params).sample(n, seed);
}

std::vector<double> lognormal_standardized_sample(double sigma, std::size_t n, std::uint64_t seed) {
    return ErrorDistribution::standardized_lognormal(sigma).sample(n, seed);
}

ErrorMoments sample_moments(std::span<const double> x) {
    if (x.size() < 4) throw std::invalid_argument("sample moments need at least four observations");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw std::domain_error("sample moments of a constant series");
    ErrorMoments out;
    out.mu = mean;
    out.sigma = std::sqrt(m2);
    out.gamma = m3 / std::pow(m2, 1.5);
    out.kappa = m4 / (m2 * m2) - 3.0;
    return out;
}

ErrorDistribution::ErrorDistribution(Spec spec) : spec_(std::move(spec)) {
    if (const auto* g = std::get_if<Gb2Params>(&spec_)) {
        g->validate();
    } else if (const auto* l = std::get_if<LognormalError>(&spec_)) {
        if (!(l->sigma > 0.0)) throw std::invalid_argument("lognormal sigma must be positive");
    } else if (const auto* c = std::get_if<ConstantError>(&spec_)) {
        if (!(c->value > 0.0)) throw std::invalid_argument("constant error must be positive");
    }
}

ErrorDistribution ErrorDistribution::standardized_gb2(double a, double p, double q) {
    return ErrorDistribution(standardize_gb2(a, p, q));
}

ErrorDistribution ErrorDistribution::standardized_lognormal(double sigma) {
    return ErrorDistribution(LognormalError{sigma});
}

ErrorDistribution ErrorDistribution::constant(double value) {
    return ErrorDistribution(ConstantError{value});
}

namespace {

struct Drawer {
    Rng& rng;

    double operator()(const Gb2Params& g) const {
        boost::random::gamma_distribution<double> gp(g.p, 1.0);
        boost::random::gamma_distribution<double> gq(g.q, 1.0);
        const double x = gp(rng);
        const double y = gq(rng);
        return g.b * std::exp((std::log(x) - std::log(y)) / g.a);
    }
    double operator()(const LognormalError& l) const {
        boost::random::normal_distribution<double> z(0.0, 1.0);
        return std::exp(l.sigma * z(rng) - 0.5 * l.sigma * l.sigma);
    }
    double operator()(const ConstantError& c) const { return c.value; }
};

}  // namespace

double ErrorDistribution::draw(Rng& rng) const { return std::visit(Drawer{rng}, spec_); }

std::vector<double> ErrorDistribution::sample(std::size_t n, std::uint64_t seed) const {
    Rng rng = make_rng(seed);
    std::vector<double> out(n);
    const Drawer drawer{rng};
    for (auto& v : out) v = std::visit(drawer, spec_);
    return out;
}

double ErrorDistribution::mean() const {
    if (const auto* g = std::get_if<Gb2Params>(&spec_)) return gb2_mean(*g);
    if (std::holds_alternative<LognormalError>(spec_)) return 1.0;
    return std::get<ConstantError>(spec_).value;
}

std::optional<double> ErrorDistribution::second_moment() const {
    if (const auto* g = std::get_if<Gb2Params>(&spec_)) {
        if (!g->has_moment(2.0)) return std::nullopt;
        return g->moment(2.0);
    }
    if (const auto* l = std::get_if<LognormalError>(&spec_)) return std::exp(l->sigma * l->sigma);
    const double c = std::get<ConstantError>(spec_).value;
    return c * c;
}

std::string ErrorDistribution::describe() const {
    std::ostringstream os;
    os.precision(17);
    if (const auto* g = std::get_if<Gb2Params>(&spec_)) {
        os << "gb2(a=" << g->a << ",b=" << g->b << ",p=" << g->p << ",q=" << g->q << ")";
    } else if (const auto* l = std::get_if<LognormalError>(&spec_)) {
        os << "lognormal(sigma=" << l->sigma << ")";
    } else {
        os << "constant(" << std::get<ConstantError>(spec_).value << ")";
    }
    return os.str();
}

}  // namespace carr
