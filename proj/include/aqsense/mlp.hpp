#pragma once

// Fully connected network: tanh hidden layers, linear scalar output, trained
// by plain mini-batch gradient descent on mean squared error.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/errors.hpp"

namespace aqsense {

template <typename Scalar>
class Mlp {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Mlp() = default;

    /// Zero weights and biases. sizes = {inputs, hidden..., 1}.
    explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2 || sizes_.back() != 1) throw DomainError("mlp: need >= 2 layers and a scalar output");
        for (int s : sizes_)
            if (s < 1) throw DomainError("mlp: layer sizes must be positive");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            weights_.push_back(Matrix::Zero(sizes_[l + 1], sizes_[l]));
            biases_.push_back(Vector::Zero(sizes_[l + 1]));
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    static Mlp random(std::vector<int> sizes, std::uint64_t seed) {
        Mlp net(std::move(sizes));
        std::mt19937_64 rng(seed);
        for (auto& W : net.weights_) {
            const Scalar bound = Scalar(1) / std::sqrt(Scalar(W.cols()));
            std::uniform_real_distribution<double> u(-double(bound), double(bound));
            for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = Scalar(u(rng));
        }
        return net;
    }

    const std::vector<int>& sizes() const { return sizes_; }
    int input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
    std::vector<Matrix>& weights() { return weights_; }
    const std::vector<Matrix>& weights() const { return weights_; }
    std::vector<Vector>& biases() { return biases_; }
    const std::vector<Vector>& biases() const { return biases_; }

    Eigen::Index parameter_count() const {
        Eigen::Index n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
        return n;
    }

    /// One column per sample.
    Vector forward_batch(const Matrix& X) const {
        if (X.rows() != input_size()) throw DomainError("mlp: input dimension mismatch");
        Matrix A = X;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Matrix Z = (weights_[l] * A).colwise() + biases_[l];
            A = hidden(l) ? Matrix(Z.array().tanh()) : std::move(Z);
        }
        return A.row(0).transpose();
    }

    Scalar forward(const Vector& x) const { return forward_batch(x)(0); }

    /// MSE over the batch; gradient with respect to parameters() in `grad`.
    Scalar loss_and_gradient(const Matrix& X, const Vector& y, Vector& grad) const {
        if (X.cols() != y.size() || X.cols() == 0) throw DomainError("mlp: batch shape mismatch");
        if (X.rows() != input_size()) throw DomainError("mlp: input dimension mismatch");
        const auto layers = weights_.size();
        std::vector<Matrix> act(layers + 1);
        act[0] = X;
        for (std::size_t l = 0; l < layers; ++l) {
            Matrix Z = (weights_[l] * act[l]).colwise() + biases_[l];
            act[l + 1] = hidden(l) ? Matrix(Z.array().tanh()) : std::move(Z);
        }
        const Scalar n = Scalar(X.cols());
        const Vector err = act[layers].row(0).transpose() - y;
        const Scalar mse = err.squaredNorm() / n;

        grad.resize(parameter_count());
        std::vector<Eigen::Index> offset(layers);
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            offset[l] = o;
            o += weights_[l].size() + biases_[l].size();
        }
        Matrix delta = (Scalar(2) / n) * err.transpose();
        for (std::size_t l = layers; l-- > 0;) {
            const Matrix gW = delta * act[l].transpose();
            const Vector gb = delta.rowwise().sum();
            grad.segment(offset[l], gW.size()) = Eigen::Map<const Vector>(gW.data(), gW.size());
            grad.segment(offset[l] + gW.size(), gb.size()) = gb;
            if (l > 0) {
                delta = (weights_[l].transpose() * delta).array() * (Scalar(1) - act[l].array().square());
            }
        }
        return mse;
    }

    /// One gradient-descent step; returns the MSE before the step.
    Scalar train_batch(const Matrix& X, const Vector& y, Scalar learning_rate) {
        Vector grad;
        const Scalar mse = loss_and_gradient(X, y, grad);
        set_parameters(parameters() - learning_rate * grad);
        return mse;
    }

    /// Flattened as W_0 (column-major), b_0, W_1, b_1, ...
    Vector parameters() const {
        Vector p(parameter_count());
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            p.segment(o, weights_[l].size()) = Eigen::Map<const Vector>(weights_[l].data(), weights_[l].size());
            o += weights_[l].size();
            p.segment(o, biases_[l].size()) = biases_[l];
            o += biases_[l].size();
        }
        return p;
    }

    void set_parameters(const Vector& p) {
        if (p.size() != parameter_count()) throw DomainError("mlp: parameter vector has the wrong length");
        Eigen::Index o = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::Map<Vector>(weights_[l].data(), weights_[l].size()) = p.segment(o, weights_[l].size());
            o += weights_[l].size();
            biases_[l] = p.segment(o, biases_[l].size());
            o += biases_[l].size();
        }
    }

    bool finite() const { return parameters().allFinite(); }

private:
    bool hidden(std::size_t l) const { return l + 1 < weights_.size(); }

    std::vector<int> sizes_;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

struct TrainingSample {
    Eigen::VectorXd features;
    double target = 0;
};

inline double mlp_forward(const Mlp<double>& net, const Eigen::VectorXd& f) { return net.forward(f); }

/// Stacks the batch and takes one gradient step; returns the pre-step MSE.
inline double mlp_train_batch(Mlp<double>& net, std::span<const TrainingSample> batch, double learning_rate) {
    if (batch.empty()) throw DomainError("mlp_train_batch: empty batch");
    Eigen::MatrixXd X(net.input_size(), static_cast<Eigen::Index>(batch.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].features.size() != net.input_size()) throw DomainError("mlp_train_batch: feature dimension mismatch");
        X.col(Eigen::Index(i)) = batch[i].features;
        y(Eigen::Index(i)) = batch[i].target;
    }
    return net.train_batch(X, y, learning_rate);
}

}  // namespace aqsense
