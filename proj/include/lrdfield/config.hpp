#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "lrdfield/error.hpp"

namespace lrdfield {

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rational make(std::int64_t n, std::int64_t d)
    {
        if (d == 0) throw Error(ErrorKind::ConfigError, "rational with zero denominator");
        if (d < 0) { n = -n; d = -d; }
        const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
        return {n / (g == 0 ? 1 : g), d / (g == 0 ? 1 : g)};
    }
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// a*b == c*d on rationals, without overflow.
inline bool product_equal(Rational a, Rational b, Rational c, Rational d)
{
    using W = __int128;
    return W(a.num) * W(b.num) * W(c.den) * W(d.den) == W(c.num) * W(d.num) * W(a.den) * W(b.den);
}

inline int compare(Rational a, Rational b)
{
    using W = __int128;
    const W l = W(a.num) * W(b.den);
    const W r = W(b.num) * W(a.den);
    return l < r ? -1 : (l > r ? 1 : 0);
}

inline std::string format_double(double x)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// A real parameter that remembers its exact rational value when it was written as one.
struct Number {
    double value = 0.0;
    std::optional<Rational> exact;
    bool fraction_form = false;

    Number() = default;
    Number(double v) : value(v) {}  // NOLINT: implicit by intent
    static Number rational(std::int64_t n, std::int64_t d)
    {
        Number x;
        x.exact = Rational::make(n, d);
        x.value = x.exact->value();
        x.fraction_form = d != 1;
        return x;
    }

    operator double() const { return value; }  // NOLINT

    std::string to_string() const
    {
        if (exact && fraction_form)
            return std::to_string(exact->num) + "/" + std::to_string(exact->den);
        return format_double(value);
    }
};

namespace detail {

inline std::optional<Rational> decimal_to_rational(const std::string& s)
{
    std::size_t i = 0;
    bool neg = false;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) neg = s[i++] == '-';
    std::int64_t mant = 0;
    int scale = 0;
    int digits = 0;
    bool seen_dot = false;
    bool any = false;
    for (; i < s.size(); ++i) {
        const char ch = s[i];
        if (ch == '.') {
            if (seen_dot) return std::nullopt;
            seen_dot = true;
            continue;
        }
        if (ch < '0' || ch > '9') break;
        any = true;
        if (mant == 0 && ch == '0') {
            if (seen_dot) ++scale;
            continue;
        }
        if (++digits > 17) return std::nullopt;
        mant = mant * 10 + (ch - '0');
        if (seen_dot) ++scale;
    }
    if (!any) return std::nullopt;
    int expo = 0;
    if (i < s.size()) {
        if (s[i] != 'e' && s[i] != 'E') return std::nullopt;
        ++i;
        const auto* first = s.data() + i;
        const auto* last = s.data() + s.size();
        if (first != last && *first == '+') ++first;
        auto r = std::from_chars(first, last, expo);
        if (r.ec != std::errc() || r.ptr != last) return std::nullopt;
    }
    scale -= expo;
    std::int64_t den = 1;
    if (scale < 0) {
        for (int k = 0; k < -scale; ++k) {
            if (mant > INT64_MAX / 10) return std::nullopt;
            mant *= 10;
        }
    } else {
        if (scale > 18) return std::nullopt;
        for (int k = 0; k < scale; ++k) den *= 10;
    }
    return Rational::make(neg ? -mant : mant, den);
}

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline Number parse_number(const std::string& text)
{
    const std::string s = detail::trim(text);
    const auto slash = s.find('/');
    if (slash != std::string::npos) {
        std::int64_t n = 0, d = 0;
        const auto a = s.substr(0, slash);
        const auto b = s.substr(slash + 1);
        auto r1 = std::from_chars(a.data(), a.data() + a.size(), n);
        auto r2 = std::from_chars(b.data(), b.data() + b.size(), d);
        if (r1.ec != std::errc() || r1.ptr != a.data() + a.size() || r2.ec != std::errc() ||
            r2.ptr != b.data() + b.size() || d == 0)
            throw Error(ErrorKind::ConfigError, "malformed rational: '" + s + "'");
        return Number::rational(n, d);
    }
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
        throw Error(ErrorKind::ConfigError, "malformed number: '" + s + "'");
    Number x(v);
    x.exact = detail::decimal_to_rational(s);
    return x;
}

/// Flat `key = value` text with '#' comments; dotted keys act as sections.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text)
    {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected 'key = value'");
            const auto key = detail::trim(line.substr(0, eq));
            const auto val = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": empty key");
            cfg.set(key, val);
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value)
    {
        if (!values_.count(key)) order_.push_back(key);
        values_[key] = value;
    }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error(ErrorKind::ConfigError, "missing key '" + key + "'");
        return it->second;
    }
    std::string get_or(const std::string& key, const std::string& fallback) const
    {
        return has(key) ? get(key) : fallback;
    }
    Number number(const std::string& key) const { return parse_number(get(key)); }

    /// Rejects any key outside `allowed`.
    void require_known(const std::set<std::string>& allowed) const
    {
        for (const auto& k : order_)
            if (!allowed.count(k)) throw Error(ErrorKind::ConfigError, "unknown key '" + k + "'");
    }

    const std::vector<std::string>& keys() const { return order_; }

    /// Merges `other` over this config; `other` wins on conflicts.
    void merge(const KeyValueConfig& other)
    {
        for (const auto& k : other.order_) set(k, other.get(k));
    }

    std::string to_string() const
    {
        std::string out;
        for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

}  // namespace lrdfield
