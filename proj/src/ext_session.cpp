#include "exlab/ext_session.hpp"

#include <cmath>
#include <numbers>

#include "exlab/errors.hpp"

namespace exlab::neural {

namespace {

using RowVec = Eigen::RowVectorXd;

RowVec layer_norm_row(const RowVec& x, const Mat& g, const Mat& b) {
  const double mu = x.mean();
  const RowVec xc = x.array() - mu;
  const double inv_sd = 1.0 / std::sqrt(xc.squaredNorm() / static_cast<double>(x.size()) + 1e-5);
  return (xc * inv_sd).cwiseProduct(g.row(0)) + b.row(0);
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

struct BlockRefs {
  const Mat* ln1g;
  const Mat* ln1b;
  const Mat* wqkv;
  const Mat* bqkv;
  const Mat* wo;
  const Mat* bo;
  const Mat* ln2g;
  const Mat* ln2b;
  const Mat* w1;
  const Mat* b1;
  const Mat* w2;
  const Mat* b2;
};

// Growable row store; rows [0, count) are live.
struct RowCache {
  Mat rows;
  Eigen::Index count = 0;

  void push(const RowVec& r) {
    if (count == rows.rows()) {
      Mat grown(std::max<Eigen::Index>(16, 2 * rows.rows()), r.size());
      if (count > 0) grown.topRows(count) = rows.topRows(count);
      rows.swap(grown);
    }
    rows.row(count++) = r;
  }
};

class ExtSession final : public PredictiveSession {
 public:
  explicit ExtSession(std::shared_ptr<const ExtModel> model) : model_(std::move(model)) {
    const auto& cfg = model_->config;
    const auto& ps = model_->params;
    for (std::size_t l = 0; l < cfg.n_embed_layers; ++l) {
      embed_w_.push_back(&ps.at("embed." + std::to_string(l) + ".w"));
      embed_b_.push_back(&ps.at("embed." + std::to_string(l) + ".b"));
    }
    if (cfg.pos_mode == PosMode::learned) pos_table_ = &ps.at("pos.table");
    for (std::size_t b = 0; b < cfg.n_layers; ++b) {
      auto p = [&](const char* leaf) { return &ps.at("block." + std::to_string(b) + "." + leaf); };
      blocks_.push_back({p("ln1.g"), p("ln1.b"), p("attn.wqkv"), p("attn.bqkv"), p("attn.wo"), p("attn.bo"),
                         p("ln2.g"), p("ln2.b"), p("mlp.w1"), p("mlp.b1"), p("mlp.w2"), p("mlp.b2")});
    }
    lnf_g_ = &ps.at("lnf.g");
    lnf_b_ = &ps.at("lnf.b");
    head_w_ = &ps.at("head.w");
    head_b_ = &ps.at("head.b");
    keys_.resize(cfg.n_layers);
    values_.resize(cfg.n_layers);
  }

  Gaussian1 predict(const Vec& x) override {
    check_x(x);
    const TokenDesc tok{TokenKind::aux, pairs_, -1};
    const RowVec out = run_token(token_input(x, 0.0), tok, false);
    return head(out);
  }

  void absorb(const Vec& x, double y) override {
    check_x(x);
    if (model_->config.arch == Arch::gpt_style) run_token(token_input(x, 0.0), {TokenKind::aux, pairs_, -1}, true);
    run_token(token_input(x, y), {TokenKind::target, pairs_, -1}, true);
    ++pairs_;
  }

  std::size_t size() const override { return pairs_; }

  std::unique_ptr<PredictiveSession> clone() const override { return std::make_unique<ExtSession>(*this); }

 private:
  void check_x(const Vec& x) const {
    if (x.size() != static_cast<Eigen::Index>(model_->config.d)) throw DimensionError("ext session: x has wrong length");
  }

  RowVec token_input(const Vec& x, double y) const {
    RowVec in(x.size() + 1);
    in.head(x.size()) = x.transpose();
    in[x.size()] = y;
    return in;
  }

  Gaussian1 head(const RowVec& h) const {
    const auto& cfg = model_->config;
    const RowVec u = layer_norm_row(h, *lnf_g_, *lnf_b_);
    const RowVec out = u * *head_w_ + head_b_->row(0);
    const double lv = std::clamp(out[1], cfg.logvar_min, cfg.logvar_max);
    return {out[0], std::exp(lv)};
  }

  RowVec run_token(const RowVec& input, const TokenDesc& tok, bool cache_it) {
    const auto& cfg = model_->config;
    RowVec h = input;
    for (std::size_t l = 0; l < embed_w_.size(); ++l) {
      h = h * *embed_w_[l] + embed_b_[l]->row(0);
      if (l + 1 < embed_w_.size()) h = h.unaryExpr(&gelu);
    }
    const std::size_t pos = tok.layout_index();
    const auto dm = static_cast<Eigen::Index>(cfg.d_model);
    if (cfg.pos_mode == PosMode::learned) {
      if (pos >= cfg.max_tokens) throw ContextLengthError("ext session: position past the learned table");
      h += pos_table_->row(static_cast<Eigen::Index>(pos));
    } else if (cfg.pos_mode == PosMode::sinusoidal) {
      for (Eigen::Index j = 0; j < dm; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(dm));
        h[j] += (j % 2 == 0) ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
      }
    } else if (cfg.pos_mode == PosMode::alternating01) {
      h.array() += static_cast<double>(pos % 2);
    }

    const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
    const Eigen::Index dh = dm / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const BlockRefs& blk = blocks_[b];
      const RowVec u = layer_norm_row(h, *blk.ln1g, *blk.ln1b);
      const RowVec qkv = u * *blk.wqkv + blk.bqkv->row(0);
      const RowVec q = qkv.segment(0, dm);
      const RowVec k = qkv.segment(dm, dm);
      const RowVec v = qkv.segment(2 * dm, dm);
      RowCache& kc = keys_[b];
      RowCache& vc = values_[b];
      const Eigen::Index n = kc.count;
      RowVec attn(dm);
      Vec scores(n + 1);
      for (Eigen::Index hd = 0; hd < heads; ++hd) {
        const auto qh = q.segment(hd * dh, dh);
        if (n > 0) scores.head(n) = kc.rows.block(0, hd * dh, n, dh) * qh.transpose();
        scores[n] = k.segment(hd * dh, dh).dot(qh);
        scores *= inv_sqrt_dh;
        const double mx = scores.maxCoeff();
        Vec p = (scores.array() - mx).exp();
        p /= p.sum();
        RowVec o = p[n] * v.segment(hd * dh, dh);
        if (n > 0) o += p.head(n).transpose() * vc.rows.block(0, hd * dh, n, dh);
        attn.segment(hd * dh, dh) = o;
      }
      if (cache_it) {
        kc.push(k);
        vc.push(v);
      }
      h += attn * *blk.wo + blk.bo->row(0);
      const RowVec u2 = layer_norm_row(h, *blk.ln2g, *blk.ln2b);
      const RowVec hidden = (u2 * *blk.w1 + blk.b1->row(0)).unaryExpr(&gelu);
      h += hidden * *blk.w2 + blk.b2->row(0);
    }
    return h;
  }

  std::shared_ptr<const ExtModel> model_;
  std::vector<const Mat*> embed_w_;
  std::vector<const Mat*> embed_b_;
  const Mat* pos_table_ = nullptr;
  std::vector<BlockRefs> blocks_;
  const Mat* lnf_g_ = nullptr;
  const Mat* lnf_b_ = nullptr;
  const Mat* head_w_ = nullptr;
  const Mat* head_b_ = nullptr;
  std::vector<RowCache> keys_;
  std::vector<RowCache> values_;
  std::size_t pairs_ = 0;
};

}  // namespace

ExtPredictive::ExtPredictive(std::shared_ptr<const ExtModel> model, std::string id)
    : model_(std::move(model)), id_(std::move(id)) {
  if (!model_) throw ContractError("ExtPredictive: null model");
  model_->config.validate();
}

std::unique_ptr<PredictiveSession> ExtPredictive::start() const { return std::make_unique<ExtSession>(model_); }

}  // namespace exlab::neural
