// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
//
// Desk-scale binarized network whose binary layers score inputs against
// filters with a pluggable similarity measure instead of the fixed
// cross-correlation. First and last layers stay full-precision; binarized
// layers keep real latent weights and binarize on the forward pass.
//
// The training path computes the match frequencies from +-1 moments
// (differentiable floats); the packed-bit kernels are the inference/testing
// route, and the two must agree exactly on +-1 inputs.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "binsim/dataset.hpp"
#include "binsim/errors.hpp"
#include "binsim/measure.hpp"
#include "binsim/rng.hpp"

namespace binsim {

using Mat = Eigen::MatrixXd;
using Arr = Eigen::ArrayXXd;

enum class ModelVariant { Mlp, Conv };

struct TrainConfig {
    int epochs = 15;
    int reject_epoch = 1;
    int batch_size = 128;
    double learning_rate = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 7;
    ModelVariant model = ModelVariant::Conv;
    bool normalize_counts = false;
    bool shuffle = true;

    void validate() const {
        if (epochs < 1 || reject_epoch < 1 || epochs < reject_epoch)
            throw ConfigError("TrainConfig: need epochs >= reject_epoch >= 1");
        if (learning_rate <= 0) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("TrainConfig: moment coefficients must lie in [0, 1)");
    }
};

// Named parameter (or running-stat) tensor with its gradient accumulator.
struct Tensor {
    std::string name;
    Mat value;
    Mat grad;
    bool clamp_unit = false;  // latent binary weights are clipped to [-1, 1] after updates

    Tensor() = default;
    Tensor(std::string n, int rows, int cols) : name(std::move(n)), value(rows, cols), grad(rows, cols) {
        value.setZero();
        grad.setZero();
    }
    void zero_grad() { grad.setZero(); }
};

// sign with sign(0) = +1.
inline Mat sign_pm1(const Mat& x) {
    return (x.array() >= 0.0).select(Mat::Ones(x.rows(), x.cols()),
                                     -Mat::Ones(x.rows(), x.cols()));
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

class DenseLayer {
public:
    DenseLayer(std::string name, int in, int out, CountingRng& rng);

    Mat forward(const Mat& x);
    Mat backward(const Mat& dy);

    Tensor w;  // out x in
    Tensor b;  // 1 x out

private:
    Mat x_;
};

// sign binarization with the straight-through estimator: backward multiplies
// by 1[|x| <= 1].
class SignSte {
public:
    Mat forward(const Mat& x) {
        mask_ = (x.array().abs() <= 1.0).cast<double>();
        return sign_pm1(x);
    }
    Mat backward(const Mat& dy) const { return dy.array() * mask_.array(); }

private:
    Mat mask_;
};

class ClampAct {
public:
    Mat forward(const Mat& x) {
        mask_ = (x.array().abs() <= 1.0).cast<double>();
        return x.array().min(1.0).max(-1.0);
    }
    Mat backward(const Mat& dy) const { return dy.array() * mask_.array(); }

private:
    Mat mask_;
};

// Per-channel (column) scale/shift normalization with batch statistics while
// training and running statistics for validation.
class BatchNorm {
public:
    BatchNorm(std::string name, int channels);

    Mat forward(const Mat& x, bool training);
    Mat backward(const Mat& dy);

    Tensor gamma, beta;
    Tensor running_mean, running_var;  // state, not optimized

    double momentum = 0.1;
    double eps = 1e-5;

private:
    Mat xhat_;
    Eigen::RowVectorXd inv_std_;
};

// The binarized similarity layer (dense core). Input rows are +-1 activation
// vectors, filters are sign(latent). Per (row, filter) the quad counts come
// from the moment identity and the measure expression produces the
// pre-activation output.
class MeasureLayer {
public:
    MeasureLayer(std::string name, int in, int out, const MeasureExpr& expr, bool normalize,
                 CountingRng& rng);

    Mat forward(const Mat& xb);
    Mat backward(const Mat& dy);

    int fan_in() const { return static_cast<int>(wlat.value.cols()); }
    int fan_out() const { return static_cast<int>(wlat.value.rows()); }
    const MeasureExpr& expr() const { return expr_; }

    // Replaces both binarizations with identity (gradient checks against the
    // real-relaxed forward).
    void set_relaxed(bool relaxed) { relaxed_ = relaxed; }

    std::array<double, 4> alpha_slice(int channel) const;

    Tensor wlat;                    // out x in latent weights
    std::vector<Tensor> alphas;     // 1 x out per alpha-bearing slot
    std::vector<int> alpha_slots;   // unary slot index per alphas[] entry
    EvalStats stats;

private:
    MeasureExpr expr_;
    bool normalize_ = false;
    bool relaxed_ = false;
    Mat xb_, wb_;
    Arr ca_, cb_, cc_, cd_;
};

// ---------------------------------------------------------------------------
// Convolution plumbing (im2col)
// ---------------------------------------------------------------------------

// Activation maps travel between layers as one row per sample in CHW order.
struct ConvShape {
    int in_c = 0, in_h = 0, in_w = 0;
    int kernel = 0, stride = 1, pad = 0;
    int out_c = 0;

    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
    int positions() const { return out_h() * out_w(); }
    int patch_len() const { return in_c * kernel * kernel; }
    int in_len() const { return in_c * in_h * in_w; }
    int out_len() const { return out_c * positions(); }

    void validate(const char* where) const {
        if (out_h() < 1 || out_w() < 1)
            throw DimensionError(std::string(where) + ": kernel does not fit input");
    }
};

// maps: B x (C*H*W) -> patches: (B*P) x (C*k*k), zero padding.
Mat im2col(const Mat& maps, const ConvShape& s);
// Scatter-add of patch gradients back to map gradients.
Mat col2im(const Mat& dpatches, const ConvShape& s, int batch);
// (B*P) x K column activations -> B x (K*P) CHW rows, and back.
Mat maps_from_cols(const Mat& cols, int batch, int positions, int channels);
Mat cols_from_maps(const Mat& maps, int batch, int positions, int channels);

// ---------------------------------------------------------------------------
// Networks
// ---------------------------------------------------------------------------

class ToyNet {
public:
    virtual ~ToyNet() = default;
    virtual Mat forward(const Mat& x, bool training) = 0;
    virtual void backward(const Mat& dlogits) = 0;
    virtual std::vector<Tensor*> parameters() = 0;
    // parameters plus normalization running statistics (checkpoint contents)
    virtual std::vector<Tensor*> state_tensors() = 0;
    virtual EvalStats measure_guard_stats() const = 0;

    void zero_grad() {
        for (Tensor* t : parameters()) t->zero_grad();
    }
};

// FP 256->128 entry, one binarized 128->128 measure layer, FP head.
class MlpNet : public ToyNet {
public:
    MlpNet(int input_len, int classes, const MeasureExpr& expr, bool normalize, CountingRng& rng);

    Mat forward(const Mat& x, bool training) override;
    void backward(const Mat& dlogits) override;
    std::vector<Tensor*> parameters() override;
    std::vector<Tensor*> state_tensors() override;
    EvalStats measure_guard_stats() const override { return measure.stats; }

    static constexpr int kHidden = 128;

    DenseLayer entry;
    ClampAct entry_act;
    SignSte entry_sign;
    MeasureLayer measure;
    BatchNorm bn;
    ClampAct act;
    DenseLayer head;
};

// FP 3x3 conv entry (16 ch), two binarized measure-conv blocks (32, 64 ch,
// stride 2), global average pool, FP linear head.
class ConvNet : public ToyNet {
public:
    ConvNet(int in_c, int in_h, int in_w, int classes, const MeasureExpr& expr, bool normalize,
            CountingRng& rng);

    Mat forward(const Mat& x, bool training) override;
    void backward(const Mat& dlogits) override;
    std::vector<Tensor*> parameters() override;
    std::vector<Tensor*> state_tensors() override;
    EvalStats measure_guard_stats() const override;

    ConvShape s0, s1, s2;
    DenseLayer conv0;  // on im2col patches
    ClampAct act0;
    SignSte sign0;
    MeasureLayer mconv1;
    BatchNorm bn1;
    ClampAct act1;
    SignSte sign1;
    MeasureLayer mconv2;
    BatchNorm bn2;
    ClampAct act2;
    DenseLayer head;

private:
    int batch_ = 0;
    Mat x0_;  // cached entry patches
};

std::unique_ptr<ToyNet> build_net(ModelVariant variant, int in_c, int in_h, int in_w, int classes,
                                  const MeasureExpr& expr, bool normalize, CountingRng& rng);

// ---------------------------------------------------------------------------
// Optimizer and loss
// ---------------------------------------------------------------------------

class Adam {
public:
    Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps = 1e-8);
    void step();

private:
    std::vector<Tensor*> params_;
    std::vector<Mat> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

struct LossResult {
    double loss = 0;
    Mat dlogits;
};

// Mean softmax cross-entropy over the batch.
LossResult softmax_xent(const Mat& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Scaled input rows ([-1, 1], CHW order) for the given sample indices.
Mat batch_inputs(const Dataset& ds, const std::vector<int>& idx);
std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& idx);

// Top-1 accuracy on the validation split; logit ties resolve to the lowest
// class index. Throws on an empty set.
double validate(ToyNet& net, const Dataset& ds);

struct TrainResult {
    std::vector<double> val_accuracy;  // one entry per completed epoch
    std::vector<double> train_loss;    // mean per epoch
    bool diverged = false;
    int epochs_run = 0;
};

// Owns one model plus optimizer state so training can pause after any epoch
// (the early-rejection check) and resume to the full budget.
class Trainer {
public:
    Trainer(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
            const MeasureExpr& expr);

    // Trains one epoch and appends the validation accuracy to the trace.
    // Returns that accuracy; on divergence sets the flag and returns 0.
    double run_epoch();

    bool diverged() const { return result_.diverged; }
    const TrainResult& result() const { return result_; }
    ToyNet& net() { return *net_; }

private:
    TrainConfig cfg_;
    const Dataset& train_;
    const Dataset& val_;
    CountingRng rng_;
    std::unique_ptr<ToyNet> net_;
    std::unique_ptr<Adam> opt_;
    TrainResult result_;
};

// Runs the full epoch budget (no early rejection).
TrainResult train(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                  const MeasureExpr& expr);

// ---------------------------------------------------------------------------
// Model checkpoint file ("BNNM")
// ---------------------------------------------------------------------------

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;  // row-major

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::vector<std::uint8_t> serialize_model(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> parse_model(const std::vector<std::uint8_t>& bytes);
void write_model_file(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_model_file(const std::string& path);

std::vector<NamedTensor> snapshot_model(ToyNet& net);
void restore_model(ToyNet& net, const std::vector<NamedTensor>& tensors);

}  // namespace binsim
