#include "mtsconv/interp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mtsconv/errors.hpp"

namespace mtsconv {

namespace {

struct AxisLayout {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisLayout layout_of(const Tensor& t, std::size_t axis) {
    if (t.empty()) {
        throw ShapeError("cannot resample an empty tensor");
    }
    if (axis >= t.rank()) {
        throw ShapeError("time axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(t.shape()));
    }
    AxisLayout l;
    for (std::size_t i = 0; i < axis; ++i) {
        l.outer *= t.shape()[i];
    }
    l.length = t.shape()[axis];
    for (std::size_t i = axis + 1; i < t.rank(); ++i) {
        l.inner *= t.shape()[i];
    }
    return l;
}

}  // namespace

ScaleSet::ScaleSet(std::vector<double> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) {
        throw ParameterError("scale set must not be empty");
    }
    bool has_unit = false;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        if (!(factors_[i] > 0.0) || !std::isfinite(factors_[i])) {
            throw ParameterError("scale factors must be positive and finite");
        }
        if (i > 0 && !(factors_[i] > factors_[i - 1])) {
            throw ParameterError("scale factors must be strictly increasing: " + to_string());
        }
        has_unit = has_unit || factors_[i] == 1.0;
    }
    if (!has_unit) {
        throw ParameterError("scale set must contain the factor 1: " + to_string());
    }
}

ScaleSet ScaleSet::parse(std::string_view text) {
    std::vector<double> factors;
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (item.empty()) {
            continue;
        }
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ParameterError("invalid scale factor '" + item + "'");
        }
        if (used != item.size()) {
            throw ParameterError("invalid scale factor '" + item + "'");
        }
        factors.push_back(v);
    }
    return ScaleSet(std::move(factors));
}

std::size_t ScaleSet::unit_index() const noexcept {
    return static_cast<std::size_t>(std::find(factors_.begin(), factors_.end(), 1.0) - factors_.begin());
}

std::string ScaleSet::to_string() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        if (i != 0) {
            os << ',';
        }
        os << factors_[i];
    }
    return os.str();
}

std::vector<ScaleSet> default_scale_sets() {
    return {
        ScaleSet({0.25, 1, 4}),
        ScaleSet({0.5, 1, 2}),
        ScaleSet({0.7, 1, 1.428}),
        ScaleSet({0.8, 1, 1.25}),
        ScaleSet({0.9, 1, 1.111}),
        ScaleSet({0.95, 1, 1.053}),
        ScaleSet({0.25, 0.5, 1, 2, 4}),
        ScaleSet({0.5, 0.7, 1, 1.428, 2}),
        ScaleSet({0.8, 0.9, 1, 1.111, 1.25}),
        ScaleSet({0.25, 0.5, 0.7, 1, 1.428, 2, 4}),
        ScaleSet({0.7, 0.8, 0.9, 1, 1.111, 1.25, 1.428}),
    };
}

std::size_t scaled_length(std::size_t length, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) {
        throw ParameterError("resampling factor must be positive, got " + std::to_string(factor));
    }
    const double scaled = std::round(static_cast<double>(length) * factor);
    return std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
}

std::vector<InterpTap> interpolation_taps(std::size_t source_len, std::size_t target_len) {
    if (source_len < 1 || target_len < 1) {
        throw ParameterError("interpolation lengths must be >= 1");
    }
    std::vector<InterpTap> taps(target_len);
    const double span = static_cast<double>(source_len - 1);
    for (std::size_t i = 0; i < target_len; ++i) {
        const double pos = target_len == 1
                               ? span / 2.0
                               : static_cast<double>(i) * span / static_cast<double>(target_len - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        double w = pos - static_cast<double>(lo);
        if (lo >= source_len - 1) {
            lo = source_len - 1;
            w = 0.0;
        }
        taps[i] = {lo, w};
    }
    return taps;
}

Tensor resample_to_length(const Tensor& t, std::size_t target_len, std::size_t time_axis) {
    if (target_len < 1) {
        throw ParameterError("target length must be >= 1");
    }
    const AxisLayout l = layout_of(t, time_axis);
    if (target_len == l.length) {
        return t;
    }
    Shape shape = t.shape();
    shape[time_axis] = target_len;
    Tensor out(shape);
    const auto taps = interpolation_taps(l.length, target_len);
    for (std::size_t o = 0; o < l.outer; ++o) {
        const double* src = t.data() + o * l.length * l.inner;
        double* dst = out.data() + o * target_len * l.inner;
        for (std::size_t i = 0; i < target_len; ++i) {
            const InterpTap tap = taps[i];
            const double* a = src + tap.lo * l.inner;
            double* row = dst + i * l.inner;
            if (tap.weight == 0.0) {
                std::copy(a, a + l.inner, row);
                continue;
            }
            const double* b = a + l.inner;
            for (std::size_t k = 0; k < l.inner; ++k) {
                // a + w(b - a) keeps constant inputs exact.
                row[k] = a[k] + tap.weight * (b[k] - a[k]);
            }
        }
    }
    return out;
}

Tensor resample_time(const Tensor& t, double factor, std::size_t time_axis) {
    const AxisLayout l = layout_of(t, time_axis);
    return resample_to_length(t, scaled_length(l.length, factor), time_axis);
}

Tensor adjoint_resample(const Tensor& grad_out, std::size_t source_len, std::size_t time_axis) {
    if (source_len < 1) {
        throw ParameterError("source length must be >= 1");
    }
    const AxisLayout l = layout_of(grad_out, time_axis);
    if (source_len == l.length) {
        return grad_out;
    }
    Shape shape = grad_out.shape();
    shape[time_axis] = source_len;
    Tensor out(shape);
    const auto taps = interpolation_taps(source_len, l.length);
    for (std::size_t o = 0; o < l.outer; ++o) {
        const double* src = grad_out.data() + o * l.length * l.inner;
        double* dst = out.data() + o * source_len * l.inner;
        for (std::size_t i = 0; i < l.length; ++i) {
            const InterpTap tap = taps[i];
            const double* g = src + i * l.inner;
            double* a = dst + tap.lo * l.inner;
            if (tap.weight == 0.0) {
                for (std::size_t k = 0; k < l.inner; ++k) {
                    a[k] += g[k];
                }
                continue;
            }
            double* b = a + l.inner;
            const double wa = 1.0 - tap.weight;
            for (std::size_t k = 0; k < l.inner; ++k) {
                a[k] += wa * g[k];
                b[k] += tap.weight * g[k];
            }
        }
    }
    return out;
}

Tensor interpolation_matrix(std::size_t source_len, std::size_t target_len) {
    const auto taps = interpolation_taps(source_len, target_len);
    Tensor a({target_len, source_len});
    for (std::size_t i = 0; i < target_len; ++i) {
        a[i * source_len + taps[i].lo] += 1.0 - taps[i].weight;
        if (taps[i].weight != 0.0) {
            a[i * source_len + taps[i].lo + 1] += taps[i].weight;
        }
    }
    return a;
}

}  // namespace mtsconv
