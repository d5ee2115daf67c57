#include "rebelhad/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "rebelhad/gradcheck.hpp"
#include "rebelhad/losses.hpp"
#include "rebelhad/networks.hpp"
#include "rebelhad/rng.hpp"

namespace rebelhad {

namespace {

Tensor random_tensor(Tensor::Shape s, SplitMix64& rng, double scale = 1.0) {
  Tensor t(s);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

// Magnitudes in [0.1, 1.1] with random sign, per-channel scaled.
Tensor away_from_zero(Tensor::Shape s, SplitMix64& rng, std::span<const double> channel_scale) {
  Tensor t(s);
  const size_t plane = t.plane();
  for (int n = 0; n < t.n(); ++n) {
    for (int c = 0; c < t.c(); ++c) {
      double* p = t.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) {
        const double mag = 0.1 + rng.uniform();
        p[i] = channel_scale[static_cast<size_t>(c) % channel_scale.size()] * (rng.uniform() < 0.5 ? -mag : mag);
      }
    }
  }
  return t;
}

Tensor uniform01(Tensor::Shape s, SplitMix64& rng) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

// Zero-initialized biases put exact zeros in front of ReLUs, where the
// objective has kinks; move to a generic point.
void jitter_biases(ParamTree& p, SplitMix64& rng) {
  for (ParamEntry& e : p.entries()) {
    if (e.name.ends_with(".b")) {
      for (double& v : e.value.values()) v = rng.uniform(-0.1, 0.1);
    }
  }
}

void add_grad(ParamTree& p, const char* name, const Tensor& g) {
  if (Tensor* dst = p.grad(name)) *dst += g;
}

uint64_t name_tag(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

using Builder = std::function<std::pair<ParamTree, Objective>(SplitMix64&)>;

struct Case {
  const char* name;
  Builder build;
  bool network;
};

std::vector<Case> cases() {
  std::vector<Case> out;

  out.push_back({"L_sim", [](SplitMix64& rng) {
                   ParamTree p;
                   const int ch[3] = {4, 6, 8}, hw[3] = {6, 3, 2};
                   for (int i = 0; i < 3; ++i) {
                     p.add("g" + std::to_string(i), random_tensor({2, ch[i], hw[i], hw[i]}, rng));
                     p.add("f" + std::to_string(i), random_tensor({2, ch[i], hw[i], hw[i]}, rng));
                   }
                   Objective f = [](ParamTree& t, bool with_grad) {
                     std::vector<Tensor> g, e, dg, de;
                     for (int i = 0; i < 3; ++i) {
                       g.push_back(t.value("g" + std::to_string(i)));
                       e.push_back(t.value("f" + std::to_string(i)));
                     }
                     const double v = loss_sim(g, e, with_grad ? &dg : nullptr, with_grad ? &de : nullptr);
                     if (with_grad) {
                       for (int i = 0; i < 3; ++i) {
                         *t.grad("g" + std::to_string(i)) += dg[i];
                         *t.grad("f" + std::to_string(i)) += de[i];
                       }
                     }
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_mse", [](SplitMix64& rng) {
                   ParamTree p;
                   p.add("target", random_tensor({2, 3, 5, 5}, rng));
                   p.add("recon", random_tensor({2, 3, 5, 5}, rng));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor dr, dt;
                     const double v = loss_mse(t.value("target"), t.value("recon"), with_grad ? &dr : nullptr,
                                               with_grad ? &dt : nullptr);
                     if (with_grad) {
                       add_grad(t, "recon", dr);
                       add_grad(t, "target", dt);
                     }
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_z", [](SplitMix64& rng) {
                   ParamTree p;
                   p.add("o", random_tensor({2, 1, 6, 6}, rng, 3.0));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor d;
                     const double v = loss_z(t.value("o"), with_grad ? &d : nullptr);
                     if (with_grad) add_grad(t, "o", d);
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_stage1", [](SplitMix64& rng) {
                   ParamTree p;
                   const int ch[3] = {4, 6, 8}, hw[3] = {8, 4, 2};
                   for (int i = 0; i < 3; ++i) {
                     p.add("g" + std::to_string(i), random_tensor({2, ch[i], hw[i], hw[i]}, rng));
                     p.add("f" + std::to_string(i), random_tensor({2, ch[i], hw[i], hw[i]}, rng));
                   }
                   p.add("target", random_tensor({2, 3, 8, 8}, rng), true);
                   p.add("recon", random_tensor({2, 3, 8, 8}, rng));
                   p.add("o", random_tensor({2, 1, 8, 8}, rng, 2.0));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     const Stage1Weights w;
                     std::vector<Tensor> g, e, dg, de;
                     for (int i = 0; i < 3; ++i) {
                       g.push_back(t.value("g" + std::to_string(i)));
                       e.push_back(t.value("f" + std::to_string(i)));
                     }
                     Tensor dr, dz;
                     Stage1Parts parts;
                     parts.sim = loss_sim(g, e, with_grad ? &dg : nullptr, with_grad ? &de : nullptr);
                     parts.mse = loss_mse(t.value("target"), t.value("recon"), with_grad ? &dr : nullptr);
                     parts.z = loss_z(t.value("o"), with_grad ? &dz : nullptr);
                     if (with_grad) {
                       for (int i = 0; i < 3; ++i) {
                         *t.grad("g" + std::to_string(i)) += dg[i];
                         *t.grad("f" + std::to_string(i)) += de[i];
                       }
                       add_grad(t, "recon", dr * w.mse);
                       add_grad(t, "o", dz * w.z);
                     }
                     return stage1_total(parts, w);
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_cc", [](SplitMix64& rng) {
                   ParamTree p;
                   p.add("teacher", random_tensor({2, 4, 5, 5}, rng), true);
                   Tensor s = random_tensor({2, 5, 5, 5}, rng);
                   // Correlate the student with the teacher so the loss is not near zero.
                   const Tensor& te = p.value("teacher");
                   for (int n = 0; n < 2; ++n) {
                     for (size_t i = 0; i < 4 * te.plane(); ++i) s.sample(n)[i] += 0.8 * te.sample(n)[i];
                   }
                   p.add("student", std::move(s));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor d;
                     const double v = loss_cc(t.value("teacher"), t.value("student"), kWhitenEps, with_grad ? &d : nullptr);
                     if (with_grad) add_grad(t, "student", d);
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_cos", [](SplitMix64& rng) {
                   ParamTree p;
                   p.add("teacher", random_tensor({3, 4, 4, 4}, rng), true);
                   p.add("student", random_tensor({3, 4, 4, 4}, rng));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor d;
                     const double v = loss_cos(t.value("teacher"), t.value("student"), with_grad ? &d : nullptr);
                     if (with_grad) add_grad(t, "student", d);
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_var", [](SplitMix64& rng) {
                   ParamTree p;
                   const double scales[] = {0.3, 2.0, 0.6, 1.5};
                   p.add("student", away_from_zero({2, 4, 5, 5}, rng, scales));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor d;
                     const double v = loss_var(t.value("student"), 1.0, with_grad ? &d : nullptr);
                     if (with_grad) add_grad(t, "student", d);
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_recon", [](SplitMix64& rng) {
                   ParamTree p;
                   p.add("target", uniform01({2, 3, 12, 12}, rng), true);
                   p.add("recon", uniform01({2, 3, 12, 12}, rng));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     Tensor d;
                     // A large SSIM weight makes the SSIM gradient visible next to the MSE term.
                     const double v = loss_recon(t.value("target"), t.value("recon"), 0.5, with_grad ? &d : nullptr);
                     if (with_grad) add_grad(t, "recon", d);
                     return v;
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"L_stage2", [](SplitMix64& rng) {
                   ParamTree p;
                   const double scales[] = {0.5, 1.5, 0.8};
                   p.add("teacher", random_tensor({2, 3, 12, 12}, rng), true);
                   p.add("target", uniform01({2, 3, 12, 12}, rng), true);
                   p.add("student", away_from_zero({2, 3, 12, 12}, rng, scales));
                   p.add("recon", uniform01({2, 3, 12, 12}, rng));
                   Objective f = [](ParamTree& t, bool with_grad) {
                     const Stage2Weights w;
                     Tensor dcc, dcos, dvar, drec;
                     Stage2Parts parts;
                     const Tensor& te = t.value("teacher");
                     const Tensor& st = t.value("student");
                     parts.cc = loss_cc(te, st, kWhitenEps, with_grad ? &dcc : nullptr);
                     parts.cos = loss_cos(te, st, with_grad ? &dcos : nullptr);
                     parts.var = loss_var(st, w.tau, with_grad ? &dvar : nullptr);
                     parts.recon = loss_recon(t.value("target"), t.value("recon"), w.ssim, with_grad ? &drec : nullptr);
                     if (with_grad) {
                       add_grad(t, "student", dcc + dcos * w.cos + dvar * w.var);
                       add_grad(t, "recon", drec * w.recon);
                     }
                     return stage2_total(parts, w);
                   };
                   return std::pair{std::move(p), f};
                 },
                 false});

  out.push_back({"net_stage1", [](SplitMix64& rng) {
                   auto model = std::make_shared<SpectralStageModel>(make_spectral_model(3, rng.next(), {4, 4, 4, 4}));
                   jitter_biases(model->params, rng);
                   const Tensor x = uniform01({2, 3, 8, 8}, rng);
                   ParamTree p = model->params;
                   Objective f = [model, x](ParamTree& t, bool with_grad) {
                     model->params = t;
                     const SpectralTrace tr = spectral_forward(*model, x);
                     const Stage1Weights w;
                     std::vector<Tensor> dg, de;
                     SpectralUpstream up;
                     Stage1Parts parts;
                     parts.sim = loss_sim(tr.dec, tr.enc, with_grad ? &dg : nullptr, with_grad ? &de : nullptr);
                     parts.mse = loss_mse(x, tr.recon, with_grad ? &up.d_recon : nullptr);
                     parts.z = loss_z(tr.o, with_grad ? &up.d_o : nullptr);
                     if (with_grad) {
                       for (int i = 0; i < 3; ++i) {
                         up.d_dec[i] = dg[i];
                         up.d_enc[i] = de[i];
                       }
                       up.d_recon *= w.mse;
                       up.d_o *= w.z;
                       model->params.zero_grad();
                       spectral_backward(*model, tr, up);
                       for (size_t i = 0; i < t.size(); ++i) {
                         if (!t.entry(i).frozen) t.entry(i).grad += model->params.entry(i).grad;
                       }
                     }
                     return stage1_total(parts, w);
                   };
                   return std::pair{std::move(p), f};
                 },
                 true});

  out.push_back({"net_stage2", [](SplitMix64& rng) {
                   const uint64_t seed = rng.next();
                   auto spa = std::make_shared<SpaFen>(make_spa_fen(4, seed, {4, 4, 4, 4}));
                   auto frn = std::make_shared<Frn>(make_frn(4, seed));
                   jitter_biases(spa->params, rng);
                   jitter_biases(frn->params, rng);
                   const Tensor x = uniform01({2, 4, 8, 8}, rng);
                   const Tensor f_spe = random_tensor({2, 4, 8, 8}, rng);
                   ParamTree p;
                   p.merge(spa->params, "spa.");
                   p.merge(frn->params, "");
                   const size_t n_spa = spa->params.size();
                   Objective f = [spa, frn, x, f_spe, n_spa](ParamTree& t, bool with_grad) {
                     for (size_t i = 0; i < t.size(); ++i) {
                       (i < n_spa ? spa->params.entry(i) : frn->params.entry(i - n_spa)).value = t.entry(i).value;
                     }
                     const Stage2Weights w;
                     const SpaTrace st = spa_fen_trace(*spa, x);
                     const FrnTrace ft = frn_trace(*frn, f_spe + st.out);
                     Tensor dcc, dcos, dvar, dhat;
                     Stage2Parts parts;
                     parts.cc = loss_cc(f_spe, st.out, kWhitenEps, with_grad ? &dcc : nullptr);
                     parts.cos = loss_cos(f_spe, st.out, with_grad ? &dcos : nullptr);
                     parts.var = loss_var(st.out, w.tau, with_grad ? &dvar : nullptr);
                     parts.recon = loss_recon(x, ft.out, w.ssim, with_grad ? &dhat : nullptr);
                     if (with_grad) {
                       spa->params.zero_grad();
                       frn->params.zero_grad();
                       Tensor d = dcc + dcos * w.cos + dvar * w.var;
                       d += frn_backward(*frn, ft, dhat * w.recon);
                       spa_fen_backward(*spa, st, d);
                       for (size_t i = 0; i < t.size(); ++i) {
                         if (t.entry(i).frozen) continue;
                         t.entry(i).grad += (i < n_spa ? spa->params.entry(i) : frn->params.entry(i - n_spa)).grad;
                       }
                     }
                     return stage2_total(parts, w);
                   };
                   return std::pair{std::move(p), f};
                 },
                 true});
  return out;
}

}  // namespace

std::vector<GradSuiteRow> run_grad_suite(const GradSuiteOptions& options) {
  std::vector<GradSuiteRow> rows;
  for (const Case& c : cases()) {
    if (c.network && !options.include_networks) continue;
    GradSuiteRow row;
    row.name = c.name;
    for (int s = 0; s < options.seeds; ++s) {
      const uint64_t seed = derive_seed(options.base_seed + static_cast<uint64_t>(s), name_tag(c.name));
      SplitMix64 rng(seed);
      auto [params, objective] = c.build(rng);
      const GradCheckResult r = finite_diff_check(objective, params, c.network ? options.network_h : options.h, rng.next());
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
      row.coordinates += r.coordinates;
      ++row.seeds;
    }
    row.passed = row.max_rel_error < options.tolerance;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string grad_suite_csv(std::span<const GradSuiteRow> rows) {
  std::string out = "check,max_rel_error,coordinates,seeds,status\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.3e", r.max_rel_error);
    out += r.name + "," + buf + "," + std::to_string(r.coordinates) + "," + std::to_string(r.seeds) + "," +
           (r.passed ? "pass" : "FAIL") + "\n";
  }
  return out;
}

}  // namespace rebelhad
