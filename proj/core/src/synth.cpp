#include "shopalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <memory>

#include "shopalign/linalg.hpp"

namespace shopalign::synth {

std::vector<double> truncated_power_law_weights(double alpha, double cutoff, int size) {
  if (alpha <= 1.0) throw ValidationError("truncated_power_law_weights: alpha must be > 1");
  if (cutoff < 1.0) throw ValidationError("truncated_power_law_weights: cutoff must be >= 1");
  if (size < 1) throw ValidationError("truncated_power_law_weights: size must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(size));
  double total = 0.0;
  for (int r = 1; r <= size; ++r) {
    const double v = std::pow(static_cast<double>(r), -alpha) * std::exp(-r / cutoff);
    w[static_cast<std::size_t>(r - 1)] = v;
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

namespace {

// log of the normalization sum_{r=1}^{R} r^-alpha * e^{-lambda r}.
double log_norm(double alpha, double lambda, long support) {
  const long cap = support > 0 ? support : 3'000'000L;
  double z = 0.0;
  for (long r = 1; r <= cap; ++r) {
    const double term = std::exp(-alpha * std::log(static_cast<double>(r)) - lambda * r);
    z += term;
    if (support == 0 && r > 64 && term < z * 1e-17) break;
  }
  return std::log(z);
}

template <typename F>
double golden_section_max(F&& f, double lo, double hi, int iters = 60) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a); f2 = f(x2);
    } else {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a); f1 = f(x1);
    }
  }
  return (a + b) / 2.0;
}

}  // namespace

PowerLawFit fit_power_law_exponent(const std::vector<int>& observations, int support) {
  if (observations.size() < 100) {
    throw ValidationError("fit_power_law_exponent: need at least 100 observations");
  }
  std::set<int> distinct;
  double s_ln = 0.0, s_r = 0.0;
  for (int x : observations) {
    if (x < 1) throw ValidationError("fit_power_law_exponent: observations must be >= 1");
    distinct.insert(x);
    s_ln += std::log(static_cast<double>(x));
    s_r += static_cast<double>(x);
  }
  if (distinct.size() < 3) {
    throw ValidationError(
        "fit_power_law_exponent: degenerate observations, need at least 3 distinct values");
  }

  const double n = static_cast<double>(observations.size());
  const auto loglik = [&](double alpha, double lambda) {
    return -alpha * s_ln - lambda * s_r - n * log_norm(alpha, lambda, support);
  };

  double alpha = 2.0, lambda = 0.01;
  for (int round = 0; round < 25; ++round) {
    const double a_next =
        golden_section_max([&](double a) { return loglik(a, lambda); }, 1.0001, 8.0);
    const double l_next =
        golden_section_max([&](double l) { return loglik(a_next, l); }, 0.0, 1.0);
    const bool settled = std::abs(a_next - alpha) < 1e-7 && std::abs(l_next - lambda) < 1e-9;
    alpha = a_next;
    lambda = l_next;
    if (settled) break;
  }

  PowerLawFit fit;
  fit.alpha = alpha;
  fit.cutoff = lambda > 1e-12 ? 1.0 / lambda : std::numeric_limits<double>::infinity();
  fit.log_likelihood = loglik(alpha, lambda);
  return fit;
}

double ks_distance(const std::vector<int>& observations, double alpha, double cutoff, int size) {
  if (observations.empty()) throw ValidationError("ks_distance: no observations");
  const auto weights = truncated_power_law_weights(alpha, cutoff, size);
  std::vector<double> empirical(static_cast<std::size_t>(size), 0.0);
  for (int x : observations) {
    if (x < 1 || x > size) throw ValidationError("ks_distance: observation outside support");
    empirical[static_cast<std::size_t>(x - 1)] += 1.0;
  }
  const double n = static_cast<double>(observations.size());
  double model_cdf = 0.0, emp_cdf = 0.0, ks = 0.0;
  for (int r = 0; r < size; ++r) {
    model_cdf += weights[static_cast<std::size_t>(r)];
    emp_cdf += empirical[static_cast<std::size_t>(r)] / n;
    ks = std::max(ks, std::abs(model_cdf - emp_cdf));
  }
  return ks;
}

void SynthConfig::validate() const {
  if (num_activities < 2) throw ValidationError("SynthConfig: need at least 2 activities");
  if (products_a < num_activities || products_b < num_activities) {
    throw ValidationError("SynthConfig: each activity needs at least one product per shop");
  }
  if (alpha_a <= 1.0 || alpha_b <= 1.0) throw ValidationError("SynthConfig: alpha must be > 1");
  if (cutoff < 1.0) throw ValidationError("SynthConfig: cutoff must be >= 1");
  for (double p : {intra_activity_prob, intent_drift_prob, correspondence_prob, landing_prob}) {
    if (p < 0.0 || p > 1.0) throw ValidationError("SynthConfig: probabilities must be in [0,1]");
  }
  if (sessions_a < 1 || sessions_b < 1) throw ValidationError("SynthConfig: need sessions");
  if (feature_dim < 1) throw ValidationError("SynthConfig: feature_dim must be >= 1");
}

SynthConfig preset(const std::string& name) {
  SynthConfig cfg;
  if (name == "paper-scale-0.01") return cfg;
  if (name == "ci-small") {
    cfg.products_a = 60;
    cfg.products_b = 80;
    cfg.sessions_a = 1500;
    cfg.sessions_b = 2500;
    return cfg;
  }
  throw ValidationError("unknown synth preset: " + name);
}

std::vector<std::string> activity_names(int n) {
  static const std::vector<std::string> base = {"soccer", "basketball", "tennis",   "running",
                                                "swimming", "boxing",   "cycling",  "yoga",
                                                "golf",     "hiking"};
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (i < static_cast<int>(base.size())) {
      names.push_back(base[static_cast<std::size_t>(i)]);
    } else {
      names.push_back("sport" + std::to_string(i));
    }
  }
  return names;
}

std::vector<std::string> query_templates(const std::string& activity) {
  return {activity + " shoes", activity + " jersey", activity + " gloves", activity + " bag"};
}

namespace {

// Session lengths with nearest-rank 25/50/75 percentiles at (3, 5, 7).
const std::vector<int> kLengths = {2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15};
const std::vector<double> kLengthProbs = {0.15, 0.15, 0.15, 0.20, 0.05, 0.10,
                                          0.07, 0.05, 0.04, 0.03, 0.01};

struct ShopLayout {
  std::string prefix;
  int products = 0;
  int activities = 0;
  std::vector<std::vector<int>> members;      // activity -> product indices
  std::vector<WeightedSampler> product_pick;  // per activity, over members
  std::vector<int> within_rank;               // per product, 1-based

  ShopLayout(const std::string& shop_prefix, int n_products, int n_activities, double alpha,
             double cutoff)
      : prefix(shop_prefix), products(n_products), activities(n_activities),
        within_rank(static_cast<std::size_t>(n_products)) {
    members.resize(static_cast<std::size_t>(n_activities));
    for (int p = 0; p < n_products; ++p) {
      members[static_cast<std::size_t>(p % n_activities)].push_back(p);
      within_rank[static_cast<std::size_t>(p)] = p / n_activities + 1;
    }
    product_pick.reserve(static_cast<std::size_t>(n_activities));
    for (int a = 0; a < n_activities; ++a) {
      product_pick.emplace_back(truncated_power_law_weights(
          alpha, cutoff, static_cast<int>(members[static_cast<std::size_t>(a)].size())));
    }
  }

  std::string id(int p) const {
    std::string num = std::to_string(p + 1);
    while (num.size() < 4) num.insert(num.begin(), '0');
    return prefix + num;
  }

  int sample_product(int activity, Rng& rng) const {
    const auto& m = members[static_cast<std::size_t>(activity)];
    return m[static_cast<std::size_t>(product_pick[static_cast<std::size_t>(activity)].sample(rng))];
  }

  // Mid-popularity member of the activity, the "landing page" product.
  // Deliberately not a chart-topper: a popularity ranker gains nothing
  // from it, a sequence model can learn it.
  int landing_product(int activity) const {
    const auto& m = members[static_cast<std::size_t>(activity)];
    return m[m.size() / 2];
  }

  int uniform_product(int activity, Rng& rng) const {
    const auto& m = members[static_cast<std::size_t>(activity)];
    return m[static_cast<std::size_t>(rng.index(m.size()))];
  }
};

corpus::EventType sample_event_type(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.70) return corpus::EventType::View;
  if (u < 0.85) return corpus::EventType::Click;
  if (u < 0.95) return corpus::EventType::Add;
  return corpus::EventType::Purchase;
}

// Related activities sit next to each other on a ring shared by both shops;
// drifting shoppers mostly hop to neighbors. The kernel is symmetric, so the
// stationary activity distribution stays uniform.
class ActivityWalk {
 public:
  ActivityWalk(int n, double intra_prob) : n_(n), intra_(intra_prob) {
    std::vector<double> weights;
    for (int d = 1; d < n; ++d) {
      const int ring = std::min(d, n - d);
      weights.push_back(std::exp(-static_cast<double>(ring - 1) / 1.5));
    }
    jump_ = std::make_unique<WeightedSampler>(weights);
  }

  int start(Rng& rng) const { return static_cast<int>(rng.index(static_cast<std::uint64_t>(n_))); }

  int step(int current, Rng& rng) const {
    if (rng.bernoulli(intra_)) return current;
    const int offset = jump_->sample(rng) + 1;
    return (current + offset) % n_;
  }

 private:
  int n_;
  double intra_;
  std::unique_ptr<WeightedSampler> jump_;
};

void generate_shop_events(const SynthConfig& cfg, const ShopLayout& layout, int session_count,
                          const std::string& shop_id, Rng& rng,
                          std::vector<corpus::Event>& out) {
  const WeightedSampler length_pick(kLengthProbs);
  const ActivityWalk walk(cfg.num_activities, cfg.intra_activity_prob);
  out.reserve(out.size() + static_cast<std::size_t>(session_count) * 6);
  for (int s = 0; s < session_count; ++s) {
    const int len = kLengths[static_cast<std::size_t>(length_pick.sample(rng))];
    int activity = walk.start(rng);
    std::string session_id = shop_id + "-s" + std::to_string(s);
    const std::int64_t base = static_cast<std::int64_t>(s) * 3'600'000;
    for (int e = 0; e < len; ++e) {
      if (e > 0) activity = walk.step(activity, rng);
      corpus::Event ev;
      ev.session_id = session_id;
      ev.shop_id = shop_id;
      ev.product_id = layout.id(layout.sample_product(activity, rng));
      ev.timestamp_ms = base + static_cast<std::int64_t>(e) * 1500;
      ev.type = sample_event_type(rng);
      out.push_back(std::move(ev));
    }
  }
}

Catalog build_catalog(const SynthConfig& cfg, const ShopLayout& layout, const Mat& centroids,
                      const std::vector<std::string>& names, Rng& rng) {
  Catalog cat;
  cat.ids.reserve(static_cast<std::size_t>(layout.products));
  cat.activities.reserve(static_cast<std::size_t>(layout.products));
  cat.features = Mat(layout.products, cfg.feature_dim);
  for (int p = 0; p < layout.products; ++p) {
    cat.ids.push_back(layout.id(p));
    cat.activities.push_back(names[static_cast<std::size_t>(p % cfg.num_activities)]);
    for (int j = 0; j < cfg.feature_dim; ++j) {
      cat.features(p, j) = centroids(p % cfg.num_activities, j) +
                           rng.gaussian(0.0, cfg.feature_noise);
    }
  }
  cat.rebuild_index();
  return cat;
}

}  // namespace

SynthData generate_shops(const SynthConfig& config) {
  config.validate();
  const auto names = activity_names(config.num_activities);
  const ShopLayout layout_a(config.shop_id_a, config.products_a, config.num_activities,
                            config.alpha_a, config.cutoff);
  const ShopLayout layout_b(config.shop_id_b, config.products_b, config.num_activities,
                            config.alpha_b, config.cutoff);

  SynthData data;
  {
    Rng rng(derive_seed(config.rng_seed, "sessions-a"));
    generate_shop_events(config, layout_a, config.sessions_a, config.shop_id_a, rng,
                         data.events_a);
  }
  {
    Rng rng(derive_seed(config.rng_seed, "sessions-b"));
    generate_shop_events(config, layout_b, config.sessions_b, config.shop_id_b, rng,
                         data.events_b);
  }

  {
    Rng rng(derive_seed(config.rng_seed, "features"));
    Mat centroids(config.num_activities, config.feature_dim);
    for (int a = 0; a < config.num_activities; ++a) {
      for (int j = 0; j < config.feature_dim; ++j) centroids(a, j) = rng.gaussian();
    }
    data.catalog_a = build_catalog(config, layout_a, centroids, names, rng);
    data.catalog_b = build_catalog(config, layout_b, centroids, names, rng);
  }

  const int both = std::min(config.products_a, config.products_b);
  for (int p = 0; p < both; ++p) {
    data.truth.correspondence.emplace_back(layout_a.id(p), layout_b.id(p));
    data.truth.a_to_b.emplace(layout_a.id(p), layout_b.id(p));
  }
  for (int p = 0; p < config.products_a; ++p) {
    data.truth.activity_a[layout_a.id(p)] = names[static_cast<std::size_t>(p % config.num_activities)];
    data.truth.rank_a[layout_a.id(p)] = layout_a.within_rank[static_cast<std::size_t>(p)];
  }
  for (int p = 0; p < config.products_b; ++p) {
    data.truth.activity_b[layout_b.id(p)] = names[static_cast<std::size_t>(p % config.num_activities)];
    data.truth.rank_b[layout_b.id(p)] = layout_b.within_rank[static_cast<std::size_t>(p)];
  }
  return data;
}

std::vector<corpus::CrossSession> generate_cross_sessions(const SynthConfig& config,
                                                          const SynthData& shops, int count) {
  config.validate();
  if (count < 1) throw ValidationError("generate_cross_sessions: count must be >= 1");
  const ShopLayout layout_a(config.shop_id_a, config.products_a, config.num_activities,
                            config.alpha_a, config.cutoff);
  const ShopLayout layout_b(config.shop_id_b, config.products_b, config.num_activities,
                            config.alpha_b, config.cutoff);
  const WeightedSampler length_pick(kLengthProbs);

  Rng rng(derive_seed(config.rng_seed, "cross"));
  std::vector<corpus::CrossSession> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int act_src =
        static_cast<int>(rng.index(static_cast<std::uint64_t>(config.num_activities)));
    const bool drifted = rng.bernoulli(config.intent_drift_prob);
    const int act_tgt =
        drifted ? static_cast<int>(rng.index(static_cast<std::uint64_t>(config.num_activities)))
                : act_src;

    corpus::CrossSession cs;
    const std::string pair_id = "x" + std::to_string(i);
    cs.source.session_id = pair_id;
    cs.source.shop_id = config.shop_id_a;
    cs.target.session_id = pair_id;
    cs.target.shop_id = config.shop_id_b;

    // Cross-session browsing is intent-driven, not chart-driven: products on
    // both sides are uniform within the activity, so a static popularity
    // ranking carries no signal about them.
    const int src_len = kLengths[static_cast<std::size_t>(length_pick.sample(rng))];
    for (int e = 0; e < src_len; ++e) {
      cs.source.products.push_back(layout_a.id(layout_a.uniform_product(act_src, rng)));
    }

    const int tgt_len = kLengths[static_cast<std::size_t>(length_pick.sample(rng))];
    for (int e = 0; e < tgt_len; ++e) {
      std::string pid;
      if (e == 0) {
        if (!drifted && rng.bernoulli(config.correspondence_prob)) {
          auto it = shops.truth.a_to_b.find(cs.source.products.back());
          if (it != shops.truth.a_to_b.end()) pid = it->second;
        }
        if (pid.empty() && rng.bernoulli(config.landing_prob)) {
          pid = layout_b.id(layout_b.landing_product(act_tgt));
        }
      } else if (!drifted && rng.bernoulli(config.correspondence_rest_prob)) {
        const auto& src_pid = cs.source.products[static_cast<std::size_t>(
            rng.index(cs.source.products.size()))];
        auto it = shops.truth.a_to_b.find(src_pid);
        if (it != shops.truth.a_to_b.end()) pid = it->second;
      }
      if (pid.empty()) {
        pid = layout_b.id(layout_b.uniform_product(act_tgt, rng));
      }
      cs.target.products.push_back(std::move(pid));
    }
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<int> rank_observations(const std::vector<corpus::Event>& events,
                                   const std::unordered_map<std::string, int>& ranks) {
  std::vector<int> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    auto it = ranks.find(e.product_id);
    if (it != ranks.end()) out.push_back(it->second);
  }
  return out;
}

QueryCorpora generate_queries(const SynthConfig& config, const SynthData& shops,
                              const std::vector<corpus::CrossSession>& cross_sessions,
                              int train_count) {
  config.validate();
  const auto names = activity_names(config.num_activities);
  const ShopLayout layout_b(config.shop_id_b, config.products_b, config.num_activities,
                            config.alpha_b, config.cutoff);
  const WeightedSampler length_pick(kLengthProbs);

  std::vector<std::vector<std::string>> templates;
  std::vector<double> template_weights;
  for (const auto& name : names) templates.push_back(query_templates(name));
  for (std::size_t i = 0; i < templates.front().size(); ++i) {
    template_weights.push_back(1.0 / static_cast<double>(1 + i));
  }
  const WeightedSampler template_pick(template_weights);

  Rng rng(derive_seed(config.rng_seed, "queries"));
  QueryCorpora corpora;
  corpora.train.reserve(static_cast<std::size_t>(train_count));
  for (int i = 0; i < train_count; ++i) {
    const int act =
        static_cast<int>(rng.index(static_cast<std::uint64_t>(config.num_activities)));
    typeahead::QueryItem item;
    item.shop_id = config.shop_id_b;
    item.session.session_id = "q" + std::to_string(i);
    item.session.shop_id = config.shop_id_b;
    const int len = kLengths[static_cast<std::size_t>(length_pick.sample(rng))];
    for (int e = 0; e < len; ++e) {
      item.session.products.push_back(layout_b.id(layout_b.sample_product(act, rng)));
    }
    item.query = templates[static_cast<std::size_t>(act)]
                          [static_cast<std::size_t>(template_pick.sample(rng))];
    corpora.train.push_back(std::move(item));
  }

  corpora.cross_truth.reserve(cross_sessions.size());
  for (const auto& cs : cross_sessions) {
    typeahead::QueryItem item;
    item.shop_id = config.shop_id_a;
    item.session = cs.source;
    const auto& first_target = cs.target.products.front();
    const auto& act_name = shops.truth.activity_b.at(first_target);
    const auto it = std::find(names.begin(), names.end(), act_name);
    const auto act = static_cast<std::size_t>(it - names.begin());
    item.query = templates[act][static_cast<std::size_t>(template_pick.sample(rng))];
    corpora.cross_truth.push_back(std::move(item));
  }
  return corpora;
}

}  // namespace shopalign::synth
