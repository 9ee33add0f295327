#pragma once

#include "poinv/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace poinv::nn {

enum class Activation { identity, relu, tanh, scaled_logistic };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::scaled_logistic: return "scaled_logistic";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "scaled_logistic") return Activation::scaled_logistic;
    throw std::runtime_error("unknown activation '" + s + "'");
}

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense layer y = act(W x + b). `scale` multiplies the scaled_logistic output.
template <class Scalar>
struct Layer {
    Matrix<Scalar> W;
    Vector<Scalar> b;
    Activation act = Activation::identity;
    Scalar scale = 1;
};

template <class Scalar>
struct Gradients {
    std::vector<Matrix<Scalar>> dW;
    std::vector<Vector<Scalar>> db;
};

/// Multi-layer perceptron operating on column batches (one sample per column).
template <class Scalar>
class Mlp {
public:
    using Mat = Matrix<Scalar>;
    using Vec = Vector<Scalar>;

    struct Tape {
        std::vector<Mat> inputs;  // input to each layer
        std::vector<Mat> pre;     // pre-activation of each layer
    };

    Mlp() = default;
    explicit Mlp(std::vector<Layer<Scalar>> layers) : layers_(std::move(layers)) { check_shapes(); }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation of weights and biases.
    static Mlp make(const std::vector<int>& widths, const std::vector<Activation>& acts, Scalar output_scale,
                    Engine& rng) {
        if (widths.size() < 2 || acts.size() != widths.size() - 1)
            throw std::invalid_argument("Mlp::make: widths/activations mismatch");
        std::vector<Layer<Scalar>> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const int in = widths[l], out = widths[l + 1];
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            Layer<Scalar> layer;
            layer.W.resize(out, in);
            layer.b.resize(out);
            for (int r = 0; r < out; ++r)
                for (int c = 0; c < in; ++c) layer.W(r, c) = static_cast<Scalar>(u(rng));
            for (int r = 0; r < out; ++r) layer.b(r) = static_cast<Scalar>(u(rng));
            layer.act = acts[l];
            layer.scale = acts[l] == Activation::scaled_logistic ? output_scale : Scalar(1);
            layers.push_back(std::move(layer));
        }
        return Mlp(std::move(layers));
    }

    int input_width() const { return static_cast<int>(layers_.front().W.cols()); }
    int output_width() const { return static_cast<int>(layers_.back().W.rows()); }
    std::vector<Layer<Scalar>>& layers() { return layers_; }
    const std::vector<Layer<Scalar>>& layers() const { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.W.size() + l.b.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers_)
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
        return true;
    }

    Mat forward(const Mat& x) const {
        Mat h = x;
        for (const auto& l : layers_) {
            Mat z = l.W * h;
            z.colwise() += l.b;
            h = activate(z, l);
        }
        return h;
    }

    Mat forward(const Mat& x, Tape& tape) const {
        tape.inputs.clear();
        tape.pre.clear();
        Mat h = x;
        for (const auto& l : layers_) {
            tape.inputs.push_back(h);
            Mat z = l.W * h;
            z.colwise() += l.b;
            h = activate(z, l);
            tape.pre.push_back(std::move(z));
        }
        return h;
    }

    /// Single-sample convenience.
    Vec forward_one(const Vec& x) const { return forward(Mat(x)).col(0); }

    /**
     * Reverse pass. `d_out` is dLoss/dOutput for the taped batch. Parameter
     * gradients are filled when `grads` is non-null; dLoss/dInput when `d_input` is.
     */
    void backward(const Tape& tape, const Mat& d_out, Gradients<Scalar>* grads, Mat* d_input = nullptr) const {
        const std::size_t L = layers_.size();
        if (grads) {
            grads->dW.resize(L);
            grads->db.resize(L);
        }
        Mat delta = d_out;
        for (std::size_t k = L; k-- > 0;) {
            const auto& l = layers_[k];
            delta = delta.cwiseProduct(derivative(tape.pre[k], l));
            if (grads) {
                grads->dW[k].noalias() = delta * tape.inputs[k].transpose();
                grads->db[k] = delta.rowwise().sum();
            }
            if (k > 0 || d_input) {
                Mat next = l.W.transpose() * delta;
                delta = std::move(next);
            }
        }
        if (d_input) *d_input = std::move(delta);
    }

private:
    static Mat activate(const Mat& z, const Layer<Scalar>& l) {
        switch (l.act) {
            case Activation::identity: return z;
            case Activation::relu: return z.cwiseMax(Scalar(0));
            case Activation::tanh: return z.array().tanh().matrix();
            case Activation::scaled_logistic:
                return (l.scale / ((-z.array()).exp() + Scalar(1))).matrix();
        }
        return z;
    }

    static Mat derivative(const Mat& z, const Layer<Scalar>& l) {
        switch (l.act) {
            case Activation::identity: return Mat::Ones(z.rows(), z.cols());
            case Activation::relu: return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
            case Activation::tanh: {
                const auto t = z.array().tanh();
                return (Scalar(1) - t * t).matrix();
            }
            case Activation::scaled_logistic: {
                const auto s = Scalar(1) / ((-z.array()).exp() + Scalar(1));
                return (l.scale * s * (Scalar(1) - s)).matrix();
            }
        }
        return z;
    }

    void check_shapes() const {
        if (layers_.empty()) throw std::invalid_argument("Mlp: no layers");
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            if (layers_[k].b.size() != layers_[k].W.rows())
                throw std::invalid_argument("Mlp: bias length does not match layer width");
            if (k > 0 && layers_[k].W.cols() != layers_[k - 1].W.rows())
                throw std::invalid_argument("Mlp: layer shapes do not chain");
        }
    }

    std::vector<Layer<Scalar>> layers_;
};

/// Bias-corrected Adam moments for one network.
template <class Scalar>
struct AdamState {
    std::vector<Matrix<Scalar>> mW, vW;
    std::vector<Vector<Scalar>> mb, vb;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(const Mlp<Scalar>& net, double lr_, double beta1_, double beta2_, double eps_ = 1e-8)
        : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {
        for (const auto& l : net.layers()) {
            mW.push_back(Matrix<Scalar>::Zero(l.W.rows(), l.W.cols()));
            vW.push_back(Matrix<Scalar>::Zero(l.W.rows(), l.W.cols()));
            mb.push_back(Vector<Scalar>::Zero(l.b.size()));
            vb.push_back(Vector<Scalar>::Zero(l.b.size()));
        }
    }
};

template <class Scalar>
void adam_step(Mlp<Scalar>& net, const Gradients<Scalar>& g, AdamState<Scalar>& s) {
    ++s.step;
    const Scalar b1 = static_cast<Scalar>(s.beta1), b2 = static_cast<Scalar>(s.beta2);
    const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(s.beta1, static_cast<double>(s.step)));
    const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(s.beta2, static_cast<double>(s.step)));
    const Scalar lr = static_cast<Scalar>(s.lr), eps = static_cast<Scalar>(s.eps);
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * grad;
        v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    auto& layers = net.layers();
    for (std::size_t k = 0; k < layers.size(); ++k) {
        update(layers[k].W, g.dW[k], s.mW[k], s.vW[k]);
        update(layers[k].b, g.db[k], s.mb[k], s.vb[k]);
    }
}

/// target <- tau * source + (1 - tau) * target
template <class Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& source, double tau) {
    const Scalar t = static_cast<Scalar>(tau), keep = static_cast<Scalar>(1.0 - tau);
    auto& dst = target.layers();
    const auto& src = source.layers();
    for (std::size_t k = 0; k < dst.size(); ++k) {
        dst[k].W = t * src[k].W + keep * dst[k].W;
        dst[k].b = t * src[k].b + keep * dst[k].b;
    }
}

namespace detail {
template <class Scalar>
constexpr const char* scalar_tag() {
    return sizeof(Scalar) == sizeof(float) ? "float32" : "float64";
}
template <class Scalar>
constexpr int digits() {
    return sizeof(Scalar) == sizeof(float) ? 9 : 17;
}
}  // namespace detail

/// Versioned text format: header, then per layer its shape, activation, scale,
/// row-major weights and biases. Values are printed with round-trip precision.
template <class Scalar>
void save(std::ostream& out, const Mlp<Scalar>& net) {
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.*g", detail::digits<Scalar>(), v);
        out << buf;
    };
    out << "poinv-mlp 1 " << detail::scalar_tag<Scalar>() << "\n";
    out << "layers " << net.layers().size() << "\n";
    for (const auto& l : net.layers()) {
        out << "layer " << l.W.cols() << " " << l.W.rows() << " " << activation_name(l.act) << " ";
        put(static_cast<double>(l.scale));
        out << "\nW";
        for (int r = 0; r < l.W.rows(); ++r)
            for (int c = 0; c < l.W.cols(); ++c) {
                out << ' ';
                put(static_cast<double>(l.W(r, c)));
            }
        out << "\nb";
        for (int r = 0; r < l.b.size(); ++r) {
            out << ' ';
            put(static_cast<double>(l.b(r)));
        }
        out << "\n";
    }
}

template <class Scalar>
Mlp<Scalar> load(std::istream& in) {
    auto fail = [](const std::string& what) { throw std::runtime_error("network file: " + what); };
    std::string magic, tag, word;
    int version = 0;
    if (!(in >> magic >> version >> tag) || magic != "poinv-mlp") fail("bad header");
    if (version != 1) fail("unsupported version " + std::to_string(version));
    if (tag != detail::scalar_tag<Scalar>()) fail("scalar type " + tag + " does not match");
    std::size_t count = 0;
    if (!(in >> word >> count) || word != "layers") fail("missing layer count");
    auto read_value = [&]() {
        std::string token;
        if (!(in >> token)) fail("truncated values");
        return static_cast<Scalar>(std::strtod(token.c_str(), nullptr));
    };
    std::vector<Layer<Scalar>> layers;
    for (std::size_t k = 0; k < count; ++k) {
        int in_w = 0, out_w = 0;
        std::string act;
        if (!(in >> word >> in_w >> out_w >> act) || word != "layer") fail("bad layer header");
        Layer<Scalar> l;
        l.act = parse_activation(act);
        l.scale = read_value();
        l.W.resize(out_w, in_w);
        l.b.resize(out_w);
        if (!(in >> word) || word != "W") fail("missing weights");
        for (int r = 0; r < out_w; ++r)
            for (int c = 0; c < in_w; ++c) l.W(r, c) = read_value();
        if (!(in >> word) || word != "b") fail("missing biases");
        for (int r = 0; r < out_w; ++r) l.b(r) = read_value();
        layers.push_back(std::move(l));
    }
    return Mlp<Scalar>(std::move(layers));
}

}  // namespace poinv::nn
