#pragma once

#include <random>
#include <vector>

#include "urbanfuse/nn/core.hpp"

namespace urbanfuse::nn {

// Every layer keeps the caches its backward pass needs from the most recent
// forward call. Training is a single logical thread: forward, then backward,
// sample by sample, with parameter gradients accumulating until the optimizer
// steps.

// ---------------------------------------------------------------------------
// Gated temporal convolution: (W_f h + b_f) o sigmoid(W_g h + b_g) over a
// width-k window along time, valid (no padding), so T -> T - k + 1.
// ---------------------------------------------------------------------------
class TemporalGatedConv {
public:
    TemporalGatedConv(int in_channels, int out_channels, int kernel, std::mt19937_64& rng,
                      const std::string& name = "tconv")
        : cin_(in_channels), cout_(out_channels), k_(kernel) {
        wf_ = Param(name + ".wf", k_ * cin_, cout_);
        wg_ = Param(name + ".wg", k_ * cin_, cout_);
        bf_ = Param(name + ".bf", 1, cout_);
        bg_ = Param(name + ".bg", 1, cout_);
        glorot_init(wf_.value, rng, k_ * cin_, cout_);
        glorot_init(wg_.value, rng, k_ * cin_, cout_);
    }

    std::vector<Param*> params() { return {&wf_, &bf_, &wg_, &bg_}; }
    int out_steps(int t_in) const { return t_in - k_ + 1; }

    Seq forward(const Seq& x) {
        const int t_in = static_cast<int>(x.size());
        if (t_in < k_)
            throw DataError("temporal convolution needs T >= " + std::to_string(k_) + ", got " +
                            std::to_string(t_in));
        const int n = static_cast<int>(x[0].rows());
        const int t_out = t_in - k_ + 1;
        xcat_.assign(t_out, Mat());
        f_.assign(t_out, Mat());
        s_.assign(t_out, Mat());
        in_steps_ = t_in;
        Seq y(t_out);
        for (int t = 0; t < t_out; ++t) {
            Mat cat(n, k_ * cin_);
            for (int tau = 0; tau < k_; ++tau) cat.middleCols(tau * cin_, cin_) = x[t + tau];
            xcat_[t] = cat;
            f_[t] = (cat * wf_.value).rowwise() + bf_.value.row(0);
            Mat g = (cat * wg_.value).rowwise() + bg_.value.row(0);
            s_[t] = sigmoid(g);
            y[t] = f_[t].cwiseProduct(s_[t]);
        }
        return y;
    }

    Seq backward(const Seq& dy) {
        const int t_out = static_cast<int>(dy.size());
        const int n = static_cast<int>(dy[0].rows());
        Seq dx(in_steps_, Mat::Zero(n, cin_));
        for (int t = 0; t < t_out; ++t) {
            Mat df = dy[t].cwiseProduct(s_[t]);
            Mat dg = dy[t].cwiseProduct(f_[t])
                         .cwiseProduct(s_[t])
                         .cwiseProduct((1.0 - s_[t].array()).matrix());
            wf_.grad += xcat_[t].transpose() * df;
            wg_.grad += xcat_[t].transpose() * dg;
            bf_.grad.row(0) += df.colwise().sum();
            bg_.grad.row(0) += dg.colwise().sum();
            Mat dcat = df * wf_.value.transpose() + dg * wg_.value.transpose();
            for (int tau = 0; tau < k_; ++tau)
                dx[t + tau] += dcat.middleCols(tau * cin_, cin_);
        }
        return dx;
    }

private:
    int cin_, cout_, k_;
    Param wf_, bf_, wg_, bg_;
    Seq xcat_, f_, s_;
    int in_steps_ = 0;
};

// ---------------------------------------------------------------------------
// Chebyshev spectral graph convolution: ReLU(sum_j T_j(L~) h Theta_j) with a
// shared precomputed polynomial basis of the scaled Laplacian.
// ---------------------------------------------------------------------------
class ChebGraphConv {
public:
    ChebGraphConv(int in_channels, int out_channels, std::vector<Mat> basis,
                  std::mt19937_64& rng, const std::string& name = "cheb")
        : cin_(in_channels), cout_(out_channels), basis_(std::move(basis)) {
        const int k = static_cast<int>(basis_.size());
        theta_ = Param(name + ".theta", k * cin_, cout_);
        glorot_init(theta_.value, rng, k * cin_, cout_);
    }

    std::vector<Param*> params() { return {&theta_}; }

    Seq forward(const Seq& x) {
        const int t_len = static_cast<int>(x.size());
        const int n = static_cast<int>(basis_[0].rows());
        const int k = static_cast<int>(basis_.size());
        stack_.assign(t_len, Mat());
        z_.assign(t_len, Mat());
        Seq y(t_len);
        for (int t = 0; t < t_len; ++t) {
            Mat s(n, k * cin_);
            for (int j = 0; j < k; ++j) s.middleCols(j * cin_, cin_) = basis_[j] * x[t];
            stack_[t] = s;
            z_[t] = s * theta_.value;
            y[t] = relu(z_[t]);
        }
        return y;
    }

    Seq backward(const Seq& dy) {
        const int t_len = static_cast<int>(dy.size());
        const int k = static_cast<int>(basis_.size());
        Seq dx(t_len);
        for (int t = 0; t < t_len; ++t) {
            Mat dz = dy[t].cwiseProduct(relu_mask(z_[t]));
            theta_.grad += stack_[t].transpose() * dz;
            Mat ds = dz * theta_.value.transpose();
            Mat dxt = Mat::Zero(dy[t].rows(), cin_);
            for (int j = 0; j < k; ++j)
                dxt += basis_[j].transpose() * ds.middleCols(j * cin_, cin_);
            dx[t] = dxt;
        }
        return dx;
    }

private:
    int cin_, cout_;
    std::vector<Mat> basis_;
    Param theta_;
    Seq stack_, z_;
};

// ---------------------------------------------------------------------------
// Diffusion graph convolution: ReLU(sum_{k=1..K} T_k(W~) h Th_f,k
//                                              + T_k(W~) h Th_b,k),
// with W~ the row-normalized transition matrix and the backward transition
// equal to the forward one for a symmetric adjacency.
// ---------------------------------------------------------------------------
class DiffusionGraphConv {
public:
    DiffusionGraphConv(int in_channels, int out_channels, const Mat& transition, int order,
                       std::mt19937_64& rng, const std::string& name = "dgcn")
        : cin_(in_channels), cout_(out_channels), order_(order) {
        // T_1..T_K of the transition matrix
        auto basis = chebyshev_basis(transition, order + 1);
        for (int k = 1; k <= order; ++k) hops_.push_back(basis[k]);
        theta_f_ = Param(name + ".theta_f", order * cin_, cout_);
        theta_b_ = Param(name + ".theta_b", order * cin_, cout_);
        glorot_init(theta_f_.value, rng, order * cin_, cout_);
        glorot_init(theta_b_.value, rng, order * cin_, cout_);
    }

    std::vector<Param*> params() { return {&theta_f_, &theta_b_}; }

    Mat forward(const Mat& h) {
        const int n = static_cast<int>(h.rows());
        Mat s(n, order_ * cin_);
        for (int k = 0; k < order_; ++k) s.middleCols(k * cin_, cin_) = hops_[k] * h;
        stack_ = s;
        z_ = s * theta_f_.value + s * theta_b_.value;
        return relu(z_);
    }

    Mat backward(const Mat& dy) {
        Mat dz = dy.cwiseProduct(relu_mask(z_));
        theta_f_.grad += stack_.transpose() * dz;
        theta_b_.grad += stack_.transpose() * dz;
        Mat ds = dz * (theta_f_.value + theta_b_.value).transpose();
        Mat dh = Mat::Zero(dy.rows(), cin_);
        for (int k = 0; k < order_; ++k)
            dh += hops_[k].transpose() * ds.middleCols(k * cin_, cin_);
        return dh;
    }

private:
    int cin_, cout_, order_;
    std::vector<Mat> hops_;
    Param theta_f_, theta_b_;
    Mat stack_, z_;
};

// ---------------------------------------------------------------------------
// Gated 1D temporal convolution for the STZINB temporal branch: an affine map
// of the window axis, sigma(Gamma * h + b), mapping width w_{l-1} -> w_l.
// ---------------------------------------------------------------------------
class TemporalConv1d {
public:
    TemporalConv1d(int in_width, int out_width, std::mt19937_64& rng,
                   const std::string& name = "tcn")
        : win_(in_width), wout_(out_width) {
        gamma_ = Param(name + ".gamma", win_, wout_);
        bias_ = Param(name + ".bias", 1, wout_);
        glorot_init(gamma_.value, rng, win_, wout_);
    }

    std::vector<Param*> params() { return {&gamma_, &bias_}; }

    Mat forward(const Mat& h) {
        if (h.cols() != win_)
            throw DataError("temporal conv width mismatch: expected " + std::to_string(win_) +
                            ", got " + std::to_string(h.cols()));
        in_ = h;
        z_ = (h * gamma_.value).rowwise() + bias_.value.row(0);
        return relu(z_);
    }

    Mat backward(const Mat& dy) {
        Mat dz = dy.cwiseProduct(relu_mask(z_));
        gamma_.grad += in_.transpose() * dz;
        bias_.grad.row(0) += dz.colwise().sum();
        return dz * gamma_.value.transpose();
    }

private:
    int win_, wout_;
    Param gamma_, bias_;
    Mat in_, z_;
};

// Plain affine layer, no activation.
class Dense {
public:
    Dense(int in_dim, int out_dim, std::mt19937_64& rng, const std::string& name = "dense")
        : cin_(in_dim), cout_(out_dim) {
        w_ = Param(name + ".w", cin_, cout_);
        b_ = Param(name + ".b", 1, cout_);
        glorot_init(w_.value, rng, cin_, cout_);
    }

    std::vector<Param*> params() { return {&w_, &b_}; }

    Mat forward(const Mat& x) {
        in_ = x;
        return (x * w_.value).rowwise() + b_.value.row(0);
    }

    Mat backward(const Mat& dy) {
        w_.grad += in_.transpose() * dy;
        b_.grad.row(0) += dy.colwise().sum();
        return dy * w_.value.transpose();
    }

private:
    int cin_, cout_;
    Param w_, b_;
    Mat in_;
};

// ---------------------------------------------------------------------------
// Multi-head cross attention over the 1D weather series. Queries come from
// the weather window, keys and values from the node embedding; the pooled
// attention context passes through one feed-forward layer and is added back
// onto every node's embedding. With W_V = 0 (and the zero-initialized
// feed-forward biases) the module is an exact identity on the embedding.
// ---------------------------------------------------------------------------
class CrossAttention {
public:
    CrossAttention(int embed_dim, int heads, int input_width, std::mt19937_64& rng,
                   const std::string& name = "attn")
        : dh_(embed_dim), heads_(heads), win_(input_width) {
        if (dh_ % heads_ != 0)
            throw ConfigError("attention embed dim " + std::to_string(dh_) +
                              " is not divisible by " + std::to_string(heads_) + " heads");
        dk_ = dh_ / heads_;
        proj_ = Param(name + ".in_proj", win_, dh_);
        wq_ = Param(name + ".wq", dh_, dh_);
        wk_ = Param(name + ".wk", dh_, dh_);
        wv_ = Param(name + ".wv", dh_, dh_);
        wo_ = Param(name + ".wo", dh_, dh_);
        ff1_ = Param(name + ".ff1", dh_, 2 * dh_);
        fb1_ = Param(name + ".fb1", 1, 2 * dh_);
        ff2_ = Param(name + ".ff2", 2 * dh_, dh_);
        fb2_ = Param(name + ".fb2", 1, dh_);
        for (Param* p : {&proj_, &wq_, &wk_, &wv_, &wo_, &ff1_, &ff2_})
            glorot_init(p->value, rng, p->value.rows(), p->value.cols());
    }

    std::vector<Param*> params() {
        return {&proj_, &wq_, &wk_, &wv_, &wo_, &ff1_, &fb1_, &ff2_, &fb2_};
    }

    Param& value_weights() { return wv_; }
    Param& key_weights() { return wk_; }
    Param& out_weights() { return wo_; }
    // pooled attention context (1 x d_h) from the last forward
    const Mat& last_context() const { return c_; }

    // embed: N x d_h node embedding; weather: T x W window.
    Mat forward(const Mat& embed, const Mat& weather) {
        e_ = embed;
        x_ = weather;
        const int t_len = static_cast<int>(weather.rows());
        xp_ = weather * proj_.value;  // T x d_h
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk_));

        q_.clear();
        k_.clear();
        v_.clear();
        r_.clear();
        Mat o(t_len, dh_);
        for (int head = 0; head < heads_; ++head) {
            Mat qh = xp_ * wq_.value.middleCols(head * dk_, dk_);
            Mat kh = embed * wk_.value.middleCols(head * dk_, dk_);
            Mat vh = embed * wv_.value.middleCols(head * dk_, dk_);
            Mat z = scale * (qh * kh.transpose());  // T x N
            Mat r(z.rows(), z.cols());
            for (int i = 0; i < z.rows(); ++i) {
                Eigen::RowVectorXd row = z.row(i);
                double m = row.maxCoeff();
                Eigen::RowVectorXd ex = (row.array() - m).exp();
                r.row(i) = ex / ex.sum();
            }
            o.middleCols(head * dk_, dk_) = r * vh;
            q_.push_back(qh);
            k_.push_back(kh);
            v_.push_back(vh);
            r_.push_back(r);
        }
        o_ = o;
        a_ = o * wo_.value;                  // T x d_h
        c_ = a_.colwise().mean();            // 1 x d_h context
        h1_ = c_ * ff1_.value + fb1_.value;  // 1 x 2d_h
        hr_ = relu(h1_);
        Mat f = hr_ * ff2_.value + fb2_.value;  // 1 x d_h
        return embed.rowwise() + f.row(0);
    }

    Mat backward(const Mat& dout) {
        const int t_len = static_cast<int>(x_.rows());
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk_));
        Mat de = dout;  // residual path

        Mat df = dout.colwise().sum();  // 1 x d_h
        ff2_.grad += hr_.transpose() * df;
        fb2_.grad += df;
        Mat dhr = df * ff2_.value.transpose();
        Mat dh1 = dhr.cwiseProduct(relu_mask(h1_));
        ff1_.grad += c_.transpose() * dh1;
        fb1_.grad += dh1;
        Mat dc = dh1 * ff1_.value.transpose();  // 1 x d_h

        Mat da = Mat::Constant(t_len, 1, 1.0 / t_len) * dc;  // T x d_h
        wo_.grad += o_.transpose() * da;
        Mat do_ = da * wo_.value.transpose();

        Mat dxp = Mat::Zero(t_len, dh_);
        for (int head = 0; head < heads_; ++head) {
            Mat doh = do_.middleCols(head * dk_, dk_);
            Mat dr = doh * v_[head].transpose();         // T x N
            Mat dvh = r_[head].transpose() * doh;        // N x dk
            Mat rd = dr.cwiseProduct(r_[head]);
            Eigen::VectorXd rowsum = rd.rowwise().sum();
            // softmax backward: dZ = R o (dR - rowsum(dR o R))
            Mat dz = (rd.array() - r_[head].array().colwise() * rowsum.array()).matrix();
            Mat dqh = scale * dz * k_[head];
            Mat dkh = scale * dz.transpose() * q_[head];
            wq_.grad.middleCols(head * dk_, dk_) += xp_.transpose() * dqh;
            wk_.grad.middleCols(head * dk_, dk_) += e_.transpose() * dkh;
            wv_.grad.middleCols(head * dk_, dk_) += e_.transpose() * dvh;
            dxp += dqh * wq_.value.middleCols(head * dk_, dk_).transpose();
            de += dkh * wk_.value.middleCols(head * dk_, dk_).transpose();
            de += dvh * wv_.value.middleCols(head * dk_, dk_).transpose();
        }
        proj_.grad += x_.transpose() * dxp;
        return de;
    }

private:
    int dh_, heads_, win_, dk_ = 0;
    Param proj_, wq_, wk_, wv_, wo_, ff1_, fb1_, ff2_, fb2_;
    Mat e_, x_, xp_, o_, a_, c_, h1_, hr_;
    std::vector<Mat> q_, k_, v_, r_;
};

}  // namespace urbanfuse::nn
