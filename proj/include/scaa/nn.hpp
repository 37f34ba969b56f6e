#pragma once

// Parameter registry and the convolutional building blocks shared by the
// encoders, attention fusion and decoder. Parameters are registered in
// construction order, which fixes the optimizer state layout and the
// checkpoint payload order.

#include <string>
#include <unordered_map>
#include <vector>

#include "scaa/tensor.hpp"

namespace scaa {

template <typename T>
class ParamStore {
public:
    Tensor<T> create(const std::string& name, Shape shape) {
        SCAA_CHECK(!index_.count(name), "ParamStore: duplicate parameter '", name, "'");
        Tensor<T> t = Tensor<T>::zeros(std::move(shape), /*requires_grad=*/true);
        index_[name] = tensors_.size();
        names_.push_back(name);
        tensors_.push_back(t);
        return t;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& get(const std::string& name) {
        auto it = index_.find(name);
        SCAA_CHECK(it != index_.end(), "ParamStore: unknown parameter '", name, "'");
        return tensors_[it->second];
    }

    size_t count() const { return tensors_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor<T>>& tensors() { return tensors_; }
    const std::vector<Tensor<T>>& tensors() const { return tensors_; }

    int64_t total_parameters() const {
        int64_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& t : tensors_) t.zero_grad();
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(Tensor<T>& w, int64_t fan_in, Rng& rng) {
    SCAA_CHECK(fan_in > 0, "kaiming_uniform: fan_in must be positive");
    const double bound = std::sqrt(6.0 / (double)fan_in);
    auto& v = w.mutable_value();
    for (auto& x : v) x = (T)rng.uniform(-bound, bound);
}

template <typename T>
void fill_constant(Tensor<T>& t, T v) {
    auto& d = t.mutable_value();
    std::fill(d.begin(), d.end(), v);
}

template <typename T>
struct Conv2dLayer {
    Tensor<T> w, b;
    int64_t stride = 1, pad = 0;

    static Conv2dLayer create(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
                              int64_t k, int64_t pad, Rng& rng, int64_t stride = 1) {
        Conv2dLayer l;
        l.w = ps.create(name + ".w", {cout, cin, k, k});
        l.b = ps.create(name + ".b", {cout});
        l.stride = stride;
        l.pad = pad;
        kaiming_uniform(l.w, cin * k * k, rng);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct Conv3dLayer {
    Tensor<T> w, b;
    int64_t stride = 1, pad = 0;

    static Conv3dLayer create(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
                              int64_t k, int64_t pad, Rng& rng, int64_t stride = 1) {
        Conv3dLayer l;
        l.w = ps.create(name + ".w", {cout, cin, k, k, k});
        l.b = ps.create(name + ".b", {cout});
        l.stride = stride;
        l.pad = pad;
        kaiming_uniform(l.w, cin * k * k * k, rng);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv3d(x, w, b, stride, pad); }
};

template <typename T>
struct InstanceNormLayer {
    Tensor<T> gamma, beta;
    double eps = 1e-5;

    static InstanceNormLayer create(ParamStore<T>& ps, const std::string& name, int64_t c,
                                    double eps = 1e-5) {
        InstanceNormLayer l;
        l.gamma = ps.create(name + ".g", {c});
        l.beta = ps.create(name + ".b", {c});
        l.eps = eps;
        fill_constant(l.gamma, T(1));
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return instance_norm(x, gamma, beta, eps); }
};

// One conv 3x3 (pad 1) + instance norm + relu.
template <typename T>
struct ConvUnit2D {
    Conv2dLayer<T> conv;
    InstanceNormLayer<T> norm;

    static ConvUnit2D create(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
                             Rng& rng) {
        return {Conv2dLayer<T>::create(ps, name + ".conv", cin, cout, 3, 1, rng),
                InstanceNormLayer<T>::create(ps, name + ".norm", cout)};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return relu(norm(conv(x))); }
};

// Two (conv 3x3 pad 1 + instance norm + relu) stages, optional trailing 2x2
// max pool.
template <typename T>
struct ConvBlock2D {
    ConvUnit2D<T> unit1, unit2;
    bool has_pool = false;

    static ConvBlock2D create(ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
                              Rng& rng, bool has_pool = false) {
        return {ConvUnit2D<T>::create(ps, name + ".u1", cin, cout, rng),
                ConvUnit2D<T>::create(ps, name + ".u2", cout, cout, rng), has_pool};
    }

    // Output of the conv stages, before any pooling.
    Tensor<T> features(const Tensor<T>& x) const { return unit2(unit1(x)); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> f = features(x);
        return has_pool ? maxpool(f, {2, 2}) : f;
    }

    static int64_t parameter_count(int64_t cin, int64_t cout) {
        return (cout * cin * 9 + cout + 2 * cout) + (cout * cout * 9 + cout + 2 * cout);
    }
};

// Two (conv 3x3x3 pad 1 + instance norm + relu) stages plus a skip; the skip
// is the identity when channel counts match and a 1x1x1 projection otherwise.
template <typename T>
struct ResidualBlock3D {
    Conv3dLayer<T> conv1, conv2;
    InstanceNormLayer<T> norm1, norm2;
    Conv3dLayer<T> skip;  // only when cin != cout
    bool has_skip_proj = false;

    static ResidualBlock3D create(ParamStore<T>& ps, const std::string& name, int64_t cin,
                                  int64_t cout, Rng& rng) {
        ResidualBlock3D b;
        b.conv1 = Conv3dLayer<T>::create(ps, name + ".conv1", cin, cout, 3, 1, rng);
        b.norm1 = InstanceNormLayer<T>::create(ps, name + ".norm1", cout);
        b.conv2 = Conv3dLayer<T>::create(ps, name + ".conv2", cout, cout, 3, 1, rng);
        b.norm2 = InstanceNormLayer<T>::create(ps, name + ".norm2", cout);
        if (cin != cout) {
            b.skip = Conv3dLayer<T>::create(ps, name + ".skip", cin, cout, 1, 0, rng);
            b.has_skip_proj = true;
        }
        return b;
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> h = relu(norm1(conv1(x)));
        h = relu(norm2(conv2(h)));
        return add(h, has_skip_proj ? skip(x) : x);
    }

    static int64_t parameter_count(int64_t cin, int64_t cout) {
        int64_t n = (cout * cin * 27 + cout + 2 * cout) + (cout * cout * 27 + cout + 2 * cout);
        if (cin != cout) n += cout * cin + cout;
        return n;
    }
};

}  // namespace scaa
