// Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "binsim/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace binsim {

// ---------------------------------------------------------------------------
// DenseLayer
// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::string name, int in, int out, CountingRng& rng)
    : w(name + ".w", out, in), b(name + ".b", 1, out) {
    const double limit = std::sqrt(6.0 / (in + out));
    for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) w.value(r, c) = rng.uniform_real(-limit, limit);
}

Mat DenseLayer::forward(const Mat& x) {
    if (x.cols() != w.value.cols())
        throw DimensionError("DenseLayer " + w.name + ": input width " +
                             std::to_string(x.cols()) + " != " + std::to_string(w.value.cols()));
    x_ = x;
    Mat y = x * w.value.transpose();
    y.rowwise() += b.value.row(0);
    return y;
}

Mat DenseLayer::backward(const Mat& dy) {
    w.grad += dy.transpose() * x_;
    b.grad += dy.colwise().sum();
    return dy * w.value;
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels)
    : gamma(name + ".gamma", 1, channels),
      beta(name + ".beta", 1, channels),
      running_mean(name + ".running_mean", 1, channels),
      running_var(name + ".running_var", 1, channels) {
    gamma.value.setOnes();
    running_var.value.setOnes();
}

Mat BatchNorm::forward(const Mat& x, bool training) {
    if (training) {
        const double rows = static_cast<double>(x.rows());
        Eigen::RowVectorXd mu = x.colwise().mean();
        Mat centered = x.rowwise() - mu;
        Eigen::RowVectorXd var = centered.array().square().colwise().sum() / rows;
        inv_std_ = (var.array() + eps).sqrt().inverse();
        xhat_ = centered.array().rowwise() * inv_std_.array();
        running_mean.value.row(0) = (1.0 - momentum) * running_mean.value.row(0) + momentum * mu;
        running_var.value.row(0) = (1.0 - momentum) * running_var.value.row(0) + momentum * var;
        Mat y = xhat_.array().rowwise() * gamma.value.row(0).array();
        y.rowwise() += beta.value.row(0);
        return y;
    }
    Eigen::RowVectorXd inv = (running_var.value.row(0).array() + eps).sqrt().inverse();
    Mat xhat = (x.rowwise() - running_mean.value.row(0)).array().rowwise() * inv.array();
    Mat y = xhat.array().rowwise() * gamma.value.row(0).array();
    y.rowwise() += beta.value.row(0);
    return y;
}

Mat BatchNorm::backward(const Mat& dy) {
    const double rows = static_cast<double>(dy.rows());
    gamma.grad += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta.grad += dy.colwise().sum();

    Arr dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Eigen::RowVectorXd mean_dxhat = dxhat.colwise().sum().matrix() / rows;
    Eigen::RowVectorXd mean_dxhat_xhat = (dxhat * xhat_.array()).colwise().sum().matrix() / rows;

    Arr tmp = dxhat.rowwise() - mean_dxhat.array();
    tmp -= xhat_.array().rowwise() * mean_dxhat_xhat.array();
    return (tmp.rowwise() * inv_std_.array()).matrix();
}

// ---------------------------------------------------------------------------
// MeasureLayer
// ---------------------------------------------------------------------------

MeasureLayer::MeasureLayer(std::string name, int in, int out, const MeasureExpr& expr,
                           bool normalize, CountingRng& rng)
    : wlat(name + ".wlat", out, in), expr_(expr), normalize_(normalize) {
    wlat.clamp_unit = true;
    for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) wlat.value(r, c) = rng.uniform_real(-0.5, 0.5);
    for (int slot = 0; slot < 4; ++slot) {
        if (!expr_.uses_alpha[slot]) continue;
        Tensor t(name + ".alpha" + std::to_string(slot), 1, out);
        t.value.setOnes();
        alphas.push_back(std::move(t));
        alpha_slots.push_back(slot);
    }
}

std::array<double, 4> MeasureLayer::alpha_slice(int channel) const {
    std::array<double, 4> out{1.0, 1.0, 1.0, 1.0};
    for (std::size_t k = 0; k < alpha_slots.size(); ++k)
        out[static_cast<std::size_t>(alpha_slots[k])] = alphas[k].value(0, channel);
    return out;
}

Mat MeasureLayer::forward(const Mat& xb) {
    if (xb.cols() != wlat.value.cols())
        throw DimensionError("MeasureLayer " + wlat.name + ": input width " +
                             std::to_string(xb.cols()) + " != fan-in " +
                             std::to_string(wlat.value.cols()));
    const double n = static_cast<double>(fan_in());
    xb_ = xb;
    wb_ = relaxed_ ? wlat.value : sign_pm1(wlat.value);

    const Mat dots = xb_ * wb_.transpose();
    const Eigen::ArrayXd p = xb_.rowwise().sum().array();
    const Eigen::Array<double, 1, Eigen::Dynamic> q = wb_.rowwise().sum().transpose().array();

    Arr s = dots.array();
    ca_ = ((s.colwise() + p).rowwise() + q + n) / 4.0;
    cd_ = ((s.colwise() - p).rowwise() - q + n) / 4.0;
    cb_ = (((-s).colwise() - p).rowwise() + q + n) / 4.0;
    cc_ = (((-s).colwise() + p).rowwise() - q + n) / 4.0;
    if (normalize_) {
        ca_ /= n;
        cb_ /= n;
        cc_ /= n;
        cd_ /= n;
    }

    const Eigen::Index rows = xb_.rows();
    const Eigen::Index cols = wb_.rows();
    Mat y(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const std::array<double, 4> alpha = alpha_slice(static_cast<int>(j));
        for (Eigen::Index i = 0; i < rows; ++i)
            y(i, j) = measure_eval<double>(expr_, ca_(i, j), cb_(i, j), cc_(i, j), cd_(i, j),
                                           alpha, &stats);
    }
    return y;
}

Mat MeasureLayer::backward(const Mat& dy) {
    const Eigen::Index rows = dy.rows();
    const Eigen::Index cols = dy.cols();
    const double n = static_cast<double>(fan_in());

    Arr ga(rows, cols), gb(rows, cols), gc(rows, cols), gd(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        const std::array<double, 4> alpha = alpha_slice(static_cast<int>(j));
        for (Eigen::Index i = 0; i < rows; ++i) {
            const MeasureGrad<double> g = measure_eval_grad<double>(
                expr_, ca_(i, j), cb_(i, j), cc_(i, j), cd_(i, j), alpha);
            const double gy = dy(i, j);
            ga(i, j) = gy * g.da;
            gb(i, j) = gy * g.db;
            gc(i, j) = gy * g.dc;
            gd(i, j) = gy * g.dd;
            for (std::size_t k = 0; k < alpha_slots.size(); ++k)
                alphas[k].grad(0, j) +=
                    gy * g.dalpha[static_cast<std::size_t>(alpha_slots[k])];
        }
    }

    // d count / d input element from the moment identity, e.g. da/dx_l =
    // (1 + w_l)/4; collecting terms gives a constant part (row/col sums) plus
    // a part proportional to the +-1 operand.
    const double scale = (normalize_ ? 1.0 / n : 1.0) * 0.25;
    const Arr cross = ga - gb - gc + gd;
    const Mat dxb =
        scale * ((ga - gb + gc - gd).rowwise().sum().matrix() * Mat::Ones(1, fan_in()) +
                 cross.matrix() * wb_);
    const Mat dwb =
        scale * ((ga + gb - gc - gd).colwise().sum().matrix().transpose() * Mat::Ones(1, fan_in()) +
                 cross.matrix().transpose() * xb_);

    if (relaxed_)
        wlat.grad += dwb;
    else
        wlat.grad += (dwb.array() * (wlat.value.array().abs() <= 1.0).cast<double>()).matrix();
    return dxb;
}

// ---------------------------------------------------------------------------
// im2col plumbing
// ---------------------------------------------------------------------------

Mat im2col(const Mat& maps, const ConvShape& s) {
    if (maps.cols() != s.in_len())
        throw DimensionError("im2col: map width " + std::to_string(maps.cols()) + " != " +
                             std::to_string(s.in_len()));
    const int batch = static_cast<int>(maps.rows());
    const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
    Mat out(static_cast<Eigen::Index>(batch) * oh * ow, s.patch_len());
    out.setZero();
    for (int b = 0; b < batch; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index row = (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
                for (int c = 0; c < s.in_c; ++c)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.in_h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.in_w) continue;
                            out(row, (c * k + ky) * k + kx) =
                                maps(b, (c * s.in_h + iy) * s.in_w + ix);
                        }
                    }
            }
    return out;
}

Mat col2im(const Mat& dpatches, const ConvShape& s, int batch) {
    const int oh = s.out_h(), ow = s.out_w(), k = s.kernel;
    Mat out = Mat::Zero(batch, s.in_len());
    for (int b = 0; b < batch; ++b)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const Eigen::Index row = (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
                for (int c = 0; c < s.in_c; ++c)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.in_h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.in_w) continue;
                            out(b, (c * s.in_h + iy) * s.in_w + ix) +=
                                dpatches(row, (c * k + ky) * k + kx);
                        }
                    }
            }
    return out;
}

Mat maps_from_cols(const Mat& cols, int batch, int positions, int channels) {
    Mat out(batch, static_cast<Eigen::Index>(channels) * positions);
    for (int b = 0; b < batch; ++b)
        for (int p = 0; p < positions; ++p)
            for (int c = 0; c < channels; ++c)
                out(b, static_cast<Eigen::Index>(c) * positions + p) =
                    cols(static_cast<Eigen::Index>(b) * positions + p, c);
    return out;
}

Mat cols_from_maps(const Mat& maps, int batch, int positions, int channels) {
    Mat out(static_cast<Eigen::Index>(batch) * positions, channels);
    for (int b = 0; b < batch; ++b)
        for (int p = 0; p < positions; ++p)
            for (int c = 0; c < channels; ++c)
                out(static_cast<Eigen::Index>(b) * positions + p, c) =
                    maps(b, static_cast<Eigen::Index>(c) * positions + p);
    return out;
}

// ---------------------------------------------------------------------------
// MlpNet
// ---------------------------------------------------------------------------

MlpNet::MlpNet(int input_len, int classes, const MeasureExpr& expr, bool normalize,
               CountingRng& rng)
    : entry("entry", input_len, kHidden, rng),
      measure("bin1", kHidden, kHidden, expr, normalize, rng),
      bn("bn1", kHidden),
      head("head", kHidden, classes, rng) {}

Mat MlpNet::forward(const Mat& x, bool training) {
    Mat h = entry.forward(x);
    h = entry_act.forward(h);
    const Mat xb = entry_sign.forward(h);
    Mat m = measure.forward(xb);
    m = bn.forward(m, training);
    m = act.forward(m);
    return head.forward(m);
}

void MlpNet::backward(const Mat& dlogits) {
    Mat d = head.backward(dlogits);
    d = act.backward(d);
    d = bn.backward(d);
    d = measure.backward(d);
    d = entry_sign.backward(d);
    d = entry_act.backward(d);
    entry.backward(d);
}

std::vector<Tensor*> MlpNet::parameters() {
    std::vector<Tensor*> out{&entry.w, &entry.b, &measure.wlat, &bn.gamma, &bn.beta, &head.w,
                             &head.b};
    for (Tensor& t : measure.alphas) out.push_back(&t);
    return out;
}

std::vector<Tensor*> MlpNet::state_tensors() {
    std::vector<Tensor*> out = parameters();
    out.push_back(&bn.running_mean);
    out.push_back(&bn.running_var);
    return out;
}

// ---------------------------------------------------------------------------
// ConvNet
// ---------------------------------------------------------------------------

ConvNet::ConvNet(int in_c, int in_h, int in_w, int classes, const MeasureExpr& expr,
                 bool normalize, CountingRng& rng)
    : s0{in_c, in_h, in_w, 3, 1, 1, 16},
      s1{16, s0.out_h(), s0.out_w(), 3, 2, 0, 32},
      s2{32, s1.out_h(), s1.out_w(), 3, 2, 0, 64},
      conv0("conv0", s0.patch_len(), s0.out_c, rng),
      mconv1("bconv1", s1.patch_len(), s1.out_c, expr, normalize, rng),
      bn1("bn1", s1.out_c),
      mconv2("bconv2", s2.patch_len(), s2.out_c, expr, normalize, rng),
      bn2("bn2", s2.out_c),
      head("head", s2.out_c, classes, rng) {
    s0.validate("conv0");
    s1.validate("bconv1");
    s2.validate("bconv2");
}

Mat ConvNet::forward(const Mat& x, bool training) {
    batch_ = static_cast<int>(x.rows());
    x0_ = im2col(x, s0);
    Mat h = conv0.forward(x0_);
    h = act0.forward(h);
    h = sign0.forward(h);

    Mat maps = maps_from_cols(h, batch_, s0.positions(), s0.out_c);
    Mat m1 = mconv1.forward(im2col(maps, s1));
    m1 = bn1.forward(m1, training);
    m1 = act1.forward(m1);
    m1 = sign1.forward(m1);

    maps = maps_from_cols(m1, batch_, s1.positions(), s1.out_c);
    Mat m2 = mconv2.forward(im2col(maps, s2));
    m2 = bn2.forward(m2, training);
    m2 = act2.forward(m2);

    // global average pool over positions
    const int p2 = s2.positions();
    Mat gap(batch_, s2.out_c);
    for (int b = 0; b < batch_; ++b)
        gap.row(b) = m2.middleRows(static_cast<Eigen::Index>(b) * p2, p2).colwise().mean();
    return head.forward(gap);
}

void ConvNet::backward(const Mat& dlogits) {
    Mat dgap = head.backward(dlogits);

    const int p2 = s2.positions();
    Mat dm2(static_cast<Eigen::Index>(batch_) * p2, s2.out_c);
    for (int b = 0; b < batch_; ++b)
        dm2.middleRows(static_cast<Eigen::Index>(b) * p2, p2) =
            (dgap.row(b) / static_cast<double>(p2)).replicate(p2, 1);

    Mat d = act2.backward(dm2);
    d = bn2.backward(d);
    d = mconv2.backward(d);

    Mat dmaps = col2im(d, s2, batch_);
    d = cols_from_maps(dmaps, batch_, s1.positions(), s1.out_c);
    d = sign1.backward(d);
    d = act1.backward(d);
    d = bn1.backward(d);
    d = mconv1.backward(d);

    dmaps = col2im(d, s1, batch_);
    d = cols_from_maps(dmaps, batch_, s0.positions(), s0.out_c);
    d = sign0.backward(d);
    d = act0.backward(d);
    conv0.backward(d);  // entry layer: weight gradients only
}

std::vector<Tensor*> ConvNet::parameters() {
    std::vector<Tensor*> out{&conv0.w,      &conv0.b,   &mconv1.wlat, &bn1.gamma, &bn1.beta,
                             &mconv2.wlat, &bn2.gamma, &bn2.beta,    &head.w,    &head.b};
    for (Tensor& t : mconv1.alphas) out.push_back(&t);
    for (Tensor& t : mconv2.alphas) out.push_back(&t);
    return out;
}

std::vector<Tensor*> ConvNet::state_tensors() {
    std::vector<Tensor*> out = parameters();
    out.push_back(&bn1.running_mean);
    out.push_back(&bn1.running_var);
    out.push_back(&bn2.running_mean);
    out.push_back(&bn2.running_var);
    return out;
}

EvalStats ConvNet::measure_guard_stats() const {
    EvalStats s = mconv1.stats;
    s.div_guards += mconv2.stats.div_guards;
    s.log_guards += mconv2.stats.log_guards;
    s.sqrt_guards += mconv2.stats.sqrt_guards;
    s.tan_clamps += mconv2.stats.tan_clamps;
    s.saturations += mconv2.stats.saturations;
    return s;
}

std::unique_ptr<ToyNet> build_net(ModelVariant variant, int in_c, int in_h, int in_w, int classes,
                                  const MeasureExpr& expr, bool normalize, CountingRng& rng) {
    if (variant == ModelVariant::Mlp)
        return std::make_unique<MlpNet>(in_c * in_h * in_w, classes, expr, normalize, rng);
    return std::make_unique<ConvNet>(in_c, in_h, in_w, classes, expr, normalize, rng);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Tensor* t : params_) {
        m_.emplace_back(Mat::Zero(t->value.rows(), t->value.cols()));
        v_.emplace_back(Mat::Zero(t->value.rows(), t->value.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
        v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * p.grad.array().square()).matrix();
        const Arr mhat = m_[i].array() / bc1;
        const Arr vhat = v_[i].array() / bc2;
        p.value.array() -= lr_ * mhat / (vhat.sqrt() + eps_);
        if (p.clamp_unit) p.value = p.value.array().min(1.0).max(-1.0);
    }
}

// ---------------------------------------------------------------------------
// Loss / metrics
// ---------------------------------------------------------------------------

LossResult softmax_xent(const Mat& logits, const std::vector<int>& labels) {
    const Eigen::Index rows = logits.rows();
    Arr shifted = logits.array().colwise() - logits.rowwise().maxCoeff().array();
    Arr ex = shifted.exp();
    Eigen::ArrayXd denom = ex.rowwise().sum();
    Arr prob = ex.colwise() / denom;

    LossResult r;
    double total = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        total -= std::log(std::max(prob(i, labels[static_cast<std::size_t>(i)]), 1e-300));
    r.loss = total / static_cast<double>(rows);
    r.dlogits = prob.matrix();
    for (Eigen::Index i = 0; i < rows; ++i)
        r.dlogits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    r.dlogits /= static_cast<double>(rows);
    return r;
}

Mat batch_inputs(const Dataset& ds, const std::vector<int>& idx) {
    const int h = ds.height, w = ds.width, c = ds.channels;
    Mat x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(c) * h * w);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::uint8_t* px = ds.sample(static_cast<std::size_t>(idx[r]));
        for (int cc = 0; cc < c; ++cc)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    x(static_cast<Eigen::Index>(r), (static_cast<Eigen::Index>(cc) * h + y) * w + xx) =
                        static_cast<double>(px[(y * w + xx) * c + cc]) / 127.5 - 1.0;
    }
    return x;
}

std::vector<int> batch_labels(const Dataset& ds, const std::vector<int>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = ds.labels[static_cast<std::size_t>(idx[i])];
    return out;
}

double validate(ToyNet& net, const Dataset& ds) {
    if (ds.size() == 0) throw ConfigError("validate: empty validation set");
    const int batch = 256;
    std::size_t correct = 0;
    std::vector<int> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch) {
        idx.clear();
        for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i)
            idx.push_back(static_cast<int>(i));
        const Mat logits = net.forward(batch_inputs(ds, idx), /*training=*/false);
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            int best = 0;
            for (Eigen::Index k = 1; k < logits.cols(); ++k)
                if (logits(r, k) > logits(r, best)) best = static_cast<int>(k);
            if (best == ds.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])])
                ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, const Dataset& train, const Dataset& val,
                 const MeasureExpr& expr)
    : cfg_(cfg), train_(train), val_(val), rng_(cfg.seed) {
    cfg_.validate();
    if (train_.size() == 0) throw ConfigError("Trainer: empty training set");
    net_ = build_net(cfg_.model, train_.channels, train_.height, train_.width,
                     train_.num_classes, expr, cfg_.normalize_counts, rng_);
    opt_ = std::make_unique<Adam>(net_->parameters(), cfg_.learning_rate, cfg_.beta1, cfg_.beta2);
}

double Trainer::run_epoch() {
    if (result_.diverged) return 0.0;

    std::vector<int> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    if (cfg_.shuffle) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng_.uniform_int(static_cast<std::uint32_t>(i))]);
    }

    double loss_sum = 0;
    std::size_t seen = 0;
    std::vector<int> idx;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg_.batch_size)) {
        idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                       order.size(), start + static_cast<std::size_t>(cfg_.batch_size))));
        const Mat x = batch_inputs(train_, idx);
        const std::vector<int> labels = batch_labels(train_, idx);
        const Mat logits = net_->forward(x, /*training=*/true);
        const LossResult loss = softmax_xent(logits, labels);
        if (!std::isfinite(loss.loss)) {
            result_.diverged = true;
            return 0.0;
        }
        net_->zero_grad();
        net_->backward(loss.dlogits);
        opt_->step();
        loss_sum += loss.loss * static_cast<double>(idx.size());
        seen += idx.size();
    }

    const double acc = validate(*net_, val_);
    result_.train_loss.push_back(loss_sum / static_cast<double>(seen));
    result_.val_accuracy.push_back(acc);
    ++result_.epochs_run;
    return acc;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& val_ds,
                  const MeasureExpr& expr) {
    Trainer trainer(cfg, train_ds, val_ds, expr);
    for (int e = 0; e < cfg.epochs && !trainer.diverged(); ++e) trainer.run_epoch();
    return trainer.result();
}

// ---------------------------------------------------------------------------
// Model checkpoint file
// ---------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'B', 'N', 'N', 'M'};

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

std::uint32_t take_u32le(const std::vector<std::uint8_t>& bytes, std::size_t& off) {
    if (off + 4 > bytes.size())
        throw FormatError("BNNM: truncated u32 at offset " + std::to_string(off));
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[off]) |
                            (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    off += 4;
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const std::vector<NamedTensor>& tensors) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kModelMagic, kModelMagic + 4);
    put_u32le(out, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        put_u32le(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_u32le(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) put_u32le(out, d);
        const std::size_t pos = out.size();
        out.resize(pos + t.data.size() * 4);
        std::memcpy(out.data() + pos, t.data.data(), t.data.size() * 4);
    }
    return out;
}

std::vector<NamedTensor> parse_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
        throw FormatError("BNNM: bad magic at offset 0");
    std::size_t off = 4;
    const std::uint32_t count = take_u32le(bytes, off);
    std::vector<NamedTensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const std::uint32_t name_len = take_u32le(bytes, off);
        if (off + name_len > bytes.size())
            throw FormatError("BNNM: truncated name at offset " + std::to_string(off));
        t.name.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off),
                      bytes.begin() + static_cast<std::ptrdiff_t>(off + name_len));
        off += name_len;
        const std::uint32_t rank = take_u32le(bytes, off);
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(take_u32le(bytes, off));
            total *= t.dims.back();
        }
        if (off + total * 4 > bytes.size())
            throw FormatError("BNNM: truncated tensor data at offset " + std::to_string(off));
        t.data.resize(total);
        std::memcpy(t.data.data(), bytes.data() + off, total * 4);
        off += total * 4;
        out.push_back(std::move(t));
    }
    if (off != bytes.size())
        throw FormatError("BNNM: trailing bytes at offset " + std::to_string(off));
    return out;
}

void write_model_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
    const std::vector<std::uint8_t> bytes = serialize_model(tensors);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write model file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to model file: " + path);
}

std::vector<NamedTensor> read_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse_model(bytes);
}

std::vector<NamedTensor> snapshot_model(ToyNet& net) {
    std::vector<NamedTensor> out;
    for (Tensor* t : net.state_tensors()) {
        NamedTensor nt;
        nt.name = t->name;
        nt.dims = {static_cast<std::uint32_t>(t->value.rows()),
                   static_cast<std::uint32_t>(t->value.cols())};
        nt.data.reserve(static_cast<std::size_t>(t->value.size()));
        for (Eigen::Index r = 0; r < t->value.rows(); ++r)
            for (Eigen::Index c = 0; c < t->value.cols(); ++c)
                nt.data.push_back(static_cast<float>(t->value(r, c)));
        out.push_back(std::move(nt));
    }
    return out;
}

void restore_model(ToyNet& net, const std::vector<NamedTensor>& tensors) {
    std::unordered_map<std::string, const NamedTensor*> by_name;
    for (const NamedTensor& t : tensors) by_name[t.name] = &t;
    for (Tensor* t : net.state_tensors()) {
        const auto it = by_name.find(t->name);
        if (it == by_name.end())
            throw FormatError("restore_model: missing tensor '" + t->name + "'");
        const NamedTensor& nt = *it->second;
        if (nt.dims.size() != 2 || nt.dims[0] != static_cast<std::uint32_t>(t->value.rows()) ||
            nt.dims[1] != static_cast<std::uint32_t>(t->value.cols()))
            throw FormatError("restore_model: shape mismatch for tensor '" + t->name + "'");
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < t->value.rows(); ++r)
            for (Eigen::Index c = 0; c < t->value.cols(); ++c)
                t->value(r, c) = static_cast<double>(nt.data[i++]);
    }
}

}  // namespace binsim
