// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sfl/num/rng.hpp"
#include "sfl/splat/fit.hpp"
#include "sfl/splat/render.hpp"
#include "sfl/splat/scene.hpp"
#include "support/oracles.hpp"

using namespace sfl::splat;
using sfl::geo::CameraPose;
using sfl::geo::Vec3;
using sfl::io::ImageGray;
using sfl::io::ImageRGB;
using sfl::num::Rng;

namespace {

CameraPose inward_camera(double angle, double radius, double height, double extent, int size = 16) {
    Vec3 eye = {radius * extent * std::cos(angle), height * extent, radius * extent * std::sin(angle)};
    return sfl::geo::look_at(eye, {0, 0, 0}, {0, 1, 0}, 0.75 * size, 0.75 * size, size, size);
}

GaussianPrimitive random_primitive(Rng& rng, double extent) {
    GaussianPrimitive p;
    p.mu = {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)};
    p.scale = {std::exp(rng.uniform(std::log(0.1 * extent), std::log(0.4 * extent))),
               std::exp(rng.uniform(std::log(0.1 * extent), std::log(0.4 * extent))),
               std::exp(rng.uniform(std::log(0.1 * extent), std::log(0.4 * extent)))};
    double qn = 0.0;
    for (auto& c : p.quat) c = rng.normal();
    for (double c : p.quat) qn += c * c;
    for (auto& c : p.quat) c /= std::sqrt(qn);
    p.sigma = rng.uniform(0.3, 0.9);
    p.color = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    return p;
}

}  // namespace

TEST_CASE("project: on-axis isotropic primitive") {
    CameraPose cam;
    cam.fx = cam.fy = 12.0;
    cam.cx = cam.cy = 8.0;
    cam.width = cam.height = 16;
    GaussianPrimitive p;
    double z = 3.0, s = 0.4;
    p.mu = {0, 0, z};
    p.scale = {s, s, s};
    auto pr = project(p, cam);
    REQUIRE(pr.has_value());
    CHECK(pr->mean2d[0] == doctest::Approx(8.0));
    CHECK(pr->mean2d[1] == doctest::Approx(8.0));
    double expected = (12.0 * s / z) * (12.0 * s / z);
    CHECK(pr->cov2d[0] - kCovRegularizer == doctest::Approx(expected).epsilon(1e-9));
    CHECK(pr->cov2d[2] - kCovRegularizer == doctest::Approx(expected).epsilon(1e-9));
    CHECK(pr->cov2d[1] == doctest::Approx(0.0));

    SUBCASE("doubling depth quarters the on-axis covariance") {
        GaussianPrimitive far = p;
        far.mu[2] = 2 * z;
        auto pf = project(far, cam);
        REQUIRE(pf.has_value());
        CHECK(pf->cov2d[0] - kCovRegularizer == doctest::Approx(expected / 4.0).epsilon(1e-9));
    }
    SUBCASE("behind-camera primitive is excluded, not fatal") {
        GaussianPrimitive behind = p;
        behind.mu[2] = -1.0;
        CHECK(!project(behind, cam).has_value());
    }
}

TEST_CASE("project matches a finite-difference Jacobian oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        CameraPose cam = inward_camera(rng.uniform(0, 6.28), 1.5, 0.4, 1.0);
        GaussianPrimitive p = random_primitive(rng, 0.6);
        auto pr = project(p, cam);
        REQUIRE(pr.has_value());

        // Numerical Jacobian of the full world->pixel map at mu.
        auto pixel_of = [&](Vec3 world) {
            Vec3 pc = sfl::geo::mat_vec(sfl::geo::mat_transpose(cam.R), sfl::geo::sub(world, cam.t));
            return std::array<double, 2>{cam.fx * pc[0] / pc[2] + cam.cx, cam.fy * pc[1] / pc[2] + cam.cy};
        };
        double jnum[6];
        double eps = 1e-6;
        for (int k = 0; k < 3; ++k) {
            Vec3 hi = p.mu, lo = p.mu;
            hi[static_cast<size_t>(k)] += eps;
            lo[static_cast<size_t>(k)] -= eps;
            auto ph = pixel_of(hi), pl = pixel_of(lo);
            jnum[0 * 3 + k] = (ph[0] - pl[0]) / (2 * eps);
            jnum[1 * 3 + k] = (ph[1] - pl[1]) / (2 * eps);
        }
        // Sigma_world straight from the definition.
        auto rq = sfl::geo::mat_identity();
        {
            double w = p.quat[0], x = p.quat[1], y = p.quat[2], z = p.quat[3];
            rq = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                  2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                  2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)};
        }
        double cov[3] = {0, 0, 0};
        for (int r = 0; r < 3; ++r) {
            for (int s = 0; s < 3; ++s) {
                double sig_rs = 0.0;
                for (int k = 0; k < 3; ++k) {
                    sig_rs += rq[r * 3 + k] * p.scale[static_cast<size_t>(k)] * p.scale[static_cast<size_t>(k)] *
                              rq[s * 3 + k];
                }
                cov[0] += jnum[r] * sig_rs * jnum[s];
                cov[1] += jnum[r] * sig_rs * jnum[3 + s];
                cov[2] += jnum[3 + r] * sig_rs * jnum[3 + s];
            }
        }
        CHECK(std::abs(pr->cov2d[0] - (cov[0] + kCovRegularizer)) <= 1e-5 * std::max(1.0, std::abs(cov[0])));
        CHECK(std::abs(pr->cov2d[1] - cov[1]) <= 1e-5 * std::max(1.0, std::abs(cov[1])));
        CHECK(std::abs(pr->cov2d[2] - (cov[2] + kCovRegularizer)) <= 1e-5 * std::max(1.0, std::abs(cov[2])));
    }
}

TEST_CASE("render: empty scene gives black frame and zero opacity") {
    Scene s;
    s.extent = 1.0;
    CameraPose cam = inward_camera(0.3, 1.5, 0.4, 1.0);
    Rendering r = render(s, cam);
    CHECK(r.depth_order_len == 0);
    for (double v : r.rgb.data) CHECK(v == 0.0);
    for (double v : r.opacity.data) CHECK(v == 0.0);
}

TEST_CASE("render: single on-axis splat matches the closed form") {
    CameraPose cam;
    cam.fx = cam.fy = 12.0;
    cam.cx = cam.cy = 8.0;
    cam.width = cam.height = 16;
    GaussianPrimitive p;
    p.mu = {0, 0, 2.0};
    p.scale = {0.3, 0.3, 0.3};
    p.sigma = 0.8;
    p.color = {1, 0, 0};
    Scene s;
    s.extent = 1.0;
    s.primitives = {p};
    Rendering r = render(s, cam);

    // Center pixel (8,8) has center (8.5, 8.5); mean2d is (8, 8).
    double var = (12.0 * 0.3 / 2.0) * (12.0 * 0.3 / 2.0) + kCovRegularizer;
    double q = (0.5 * 0.5 + 0.5 * 0.5) / var;
    double g = std::exp(-0.5 * q);
    CHECK(std::abs(r.rgb.px(8, 8)[0] - 0.8 * g) <= 1e-6);
    CHECK(r.rgb.px(8, 8)[1] == 0.0);
    CHECK(std::abs(r.opacity.at(8, 8) - 0.8 * g) <= 1e-6);
}

TEST_CASE("render matches the per-pixel brute-force oracle") {
    Rng rng(71);
    SUBCASE("two overlapping primitives") {
        Scene s;
        s.extent = 1.0;
        GaussianPrimitive a = random_primitive(rng, 0.3), b = random_primitive(rng, 0.3);
        a.mu = {0.0, 0.0, 0.1};
        b.mu = {0.05, 0.02, -0.2};
        s.primitives = {a, b};
        CameraPose cam = inward_camera(1.2, 1.5, 0.2, 1.0);
        Rendering r = render(s, cam);
        ImageRGB orgb;
        ImageGray oop;
        sfl::testing::oracle_render(s, cam, orgb, oop);
        for (size_t i = 0; i < r.rgb.data.size(); ++i) CHECK(std::abs(r.rgb.data[i] - orgb.data[i]) <= 1e-9);
        for (size_t i = 0; i < r.opacity.data.size(); ++i) CHECK(std::abs(r.opacity.data[i] - oop.data[i]) <= 1e-9);
    }
    SUBCASE("full random scene") {
        Rng srng(5);
        Scene s = gen_scene(srng, 24, 1.0);
        CameraPose cam = inward_camera(4.0, 1.5, 0.5, 1.0);
        Rendering r = render(s, cam);
        ImageRGB orgb;
        ImageGray oop;
        sfl::testing::oracle_render(s, cam, orgb, oop);
        for (size_t i = 0; i < r.rgb.data.size(); ++i) CHECK(std::abs(r.rgb.data[i] - orgb.data[i]) <= 1e-9);
        for (size_t i = 0; i < r.opacity.data.size(); ++i) CHECK(std::abs(r.opacity.data[i] - oop.data[i]) <= 1e-9);
    }
}

TEST_CASE("render invariants: opacity bounds, black-background bound, permutation") {
    Rng rng(13);
    Scene s = gen_scene(rng, 16, 1.0);
    CameraPose cam = inward_camera(2.2, 1.4, 0.3, 1.0);
    Rendering r = render(s, cam);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double op = r.opacity.at(y, x);
            CHECK(op >= 0.0);
            CHECK(op <= 1.0);
            for (int c = 0; c < 3; ++c) CHECK(r.rgb.px(y, x)[c] <= op + 1e-6);
        }
    }
    // Permuting the primitive list (not the depth order) leaves output unchanged.
    Scene perm = s;
    std::reverse(perm.primitives.begin(), perm.primitives.end());
    Rendering r2 = render(perm, cam);
    for (size_t i = 0; i < r.rgb.data.size(); ++i) CHECK(std::abs(r.rgb.data[i] - r2.rgb.data[i]) <= 1e-12);
}

TEST_CASE("render gradients match finite differences on all fields") {
    Rng rng(333);
    Scene s;
    s.extent = 1.0;
    s.primitives = {random_primitive(rng, 0.4), random_primitive(rng, 0.4), random_primitive(rng, 0.4)};
    CameraPose cam = inward_camera(0.8, 1.5, 0.3, 1.0, 12);

    // Random linear functional over a handful of pixels as the scalar loss.
    ImageRGB d_rgb(cam.height, cam.width);
    ImageGray d_op(cam.height, cam.width);
    for (int k = 0; k < 6; ++k) {
        int y = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(cam.height)));
        int x = static_cast<int>(rng.uniform_below(static_cast<uint64_t>(cam.width)));
        for (int c = 0; c < 3; ++c) d_rgb.px(y, x)[c] += rng.uniform(-1, 1);
        d_op.at(y, x) += rng.uniform(-1, 1);
    }
    auto loss_of = [&](const Scene& scene) {
        Rendering r = render(scene, cam);
        double acc = 0.0;
        for (size_t i = 0; i < r.rgb.data.size(); ++i) acc += r.rgb.data[i] * d_rgb.data[i];
        for (size_t i = 0; i < r.opacity.data.size(); ++i) acc += r.opacity.data[i] * d_op.data[i];
        return acc;
    };
    auto grads = render_backward(s, cam, d_rgb, d_op);

    const double eps = 1e-6;
    auto check_field = [&](size_t prim, double* field, double analytic) {
        double orig = *field;
        *field = orig + eps;
        double hi = loss_of(s);
        *field = orig - eps;
        double lo = loss_of(s);
        *field = orig;
        double fd = (hi - lo) / (2 * eps);
        CHECK(std::abs(analytic - fd) / std::max(1.0, std::abs(fd)) <= 1e-4);
        (void)prim;
    };
    for (size_t i = 0; i < s.primitives.size(); ++i) {
        auto& p = s.primitives[i];
        for (int c = 0; c < 3; ++c) check_field(i, &p.mu[static_cast<size_t>(c)], grads[i].mu[static_cast<size_t>(c)]);
        for (int c = 0; c < 3; ++c)
            check_field(i, &p.scale[static_cast<size_t>(c)], grads[i].scale[static_cast<size_t>(c)]);
        for (int c = 0; c < 4; ++c)
            check_field(i, &p.quat[static_cast<size_t>(c)], grads[i].quat[static_cast<size_t>(c)]);
        check_field(i, &p.sigma, grads[i].sigma);
        for (int c = 0; c < 3; ++c)
            check_field(i, &p.color[static_cast<size_t>(c)], grads[i].color[static_cast<size_t>(c)]);
    }
}

TEST_CASE("gen_scene basics") {
    Rng a(9), b(9);
    Scene s1 = gen_scene(a, 1, 1.0);
    CHECK(s1.primitives.size() == 7);  // 1 + 6 walls
    Scene s2 = gen_scene(b, 1, 1.0);
    REQUIRE(s2.primitives.size() == s1.primitives.size());
    for (size_t i = 0; i < s1.primitives.size(); ++i) {
        CHECK(s1.primitives[i].mu == s2.primitives[i].mu);
        CHECK(s1.primitives[i].sigma == s2.primitives[i].sigma);
    }
    require_valid_scene(s1, "gen_scene test");
}

TEST_CASE("gen_scene: walls give inward views substantial coverage") {
    Rng rng(77);
    Scene s = gen_scene(rng, 64, 1.0);
    CameraPose cam = inward_camera(0.9, 1.5, 0.4, 1.0, 32);
    Rendering r = render(s, cam);
    CHECK(r.opacity.mean() > 0.5);
}

TEST_CASE("degrade") {
    Rng srng(15);
    Scene s = gen_scene(srng, 32, 1.0);
    std::vector<CameraPose> all_cams;
    for (int i = 0; i < 8; ++i) all_cams.push_back(inward_camera(i * 0.785, 1.5, 0.4, 1.0));

    SUBCASE("never increases the primitive count") {
        Rng rng(1);
        DegradeParams params;
        Scene d = degrade(s, all_cams, rng, params);
        CHECK(d.primitives.size() <= s.primitives.size());
    }
    SUBCASE("identity settings only cull the invisible") {
        Rng rng(1);
        DegradeParams params;
        params.eta = 0.0;
        params.sigma_jitter = false;
        Scene d = degrade(s, all_cams, rng, params);
        // Every survivor equals its source primitive.
        size_t matched = 0;
        for (const auto& dp : d.primitives) {
            for (const auto& sp : s.primitives) {
                if (dp.mu == sp.mu && dp.sigma == sp.sigma && dp.color == sp.color) {
                    ++matched;
                    break;
                }
            }
        }
        CHECK(matched == d.primitives.size());
        // And every culled primitive really is invisible from the inputs.
        for (const auto& sp : s.primitives) {
            bool kept = false;
            for (const auto& dp : d.primitives) {
                if (dp.mu == sp.mu && dp.color == sp.color) kept = true;
            }
            if (!kept) {
                double peak = 0.0;
                for (const auto& cam : all_cams) peak = std::max(peak, peak_alpha(sp, cam));
                CHECK(peak < params.tau_vis);
            }
        }
    }
    SUBCASE("half-space inputs cull the far side, verified by re-render") {
        // Cameras clustered on +x looking inward see only part of the scene.
        std::vector<CameraPose> half;
        for (int i = -1; i <= 1; ++i) half.push_back(inward_camera(i * 0.35, 1.5, 0.3, 1.0));
        Rng rng(2);
        DegradeParams params;
        params.eta = 0.0;
        params.sigma_jitter = false;
        Scene d = degrade(s, half, rng, params);
        CHECK(d.primitives.size() < s.primitives.size());
        for (const auto& sp : s.primitives) {
            bool kept = false;
            for (const auto& dp : d.primitives) {
                if (dp.mu == sp.mu && dp.color == sp.color) kept = true;
            }
            if (kept) continue;
            // Re-render the culled primitive alone: near-invisible from inputs.
            Scene solo;
            solo.extent = s.extent;
            solo.primitives = {sp};
            for (const auto& cam : half) {
                Rendering r = render(solo, cam);
                double mx = 0.0;
                for (double v : r.opacity.data) mx = std::max(mx, v);
                CHECK(mx < params.tau_vis);
            }
        }
    }
    SUBCASE("fixed seed reproduces the degraded scene") {
        Rng r1(42), r2(42);
        DegradeParams params;
        Scene d1 = degrade(s, all_cams, r1, params);
        Scene d2 = degrade(s, all_cams, r2, params);
        REQUIRE(d1.primitives.size() == d2.primitives.size());
        for (size_t i = 0; i < d1.primitives.size(); ++i) {
            CHECK(d1.primitives[i].mu == d2.primitives[i].mu);
            CHECK(d1.primitives[i].sigma == d2.primitives[i].sigma);
        }
    }
}

TEST_CASE("fit_scene") {
    Rng rng(21);
    Scene truth = gen_scene(rng, 12, 1.0);
    std::vector<std::pair<ImageRGB, CameraPose>> frames;
    for (int i = 0; i < 4; ++i) {
        CameraPose cam = inward_camera(i * 1.57 + 0.2, 1.5, 0.35, 1.0, 12);
        frames.emplace_back(render(truth, cam).rgb, cam);
    }

    SUBCASE("already-optimal init stays put") {
        FitResult fr = fit_scene(frames, truth, 10, 0.01);
        CHECK(fr.initial_loss <= 1e-8);
        CHECK(fr.final_loss <= 1e-8);
        for (size_t i = 0; i < truth.primitives.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                CHECK(std::abs(fr.scene.primitives[i].mu[static_cast<size_t>(c)] -
                               truth.primitives[i].mu[static_cast<size_t>(c)]) < 1e-6);
            }
        }
    }
    SUBCASE("zero steps returns init unchanged") {
        FitResult fr = fit_scene(frames, truth, 0, 0.01);
        CHECK(fr.scene.primitives.size() == truth.primitives.size());
        CHECK(fr.scene.primitives[0].mu == truth.primitives[0].mu);
    }
    SUBCASE("recovers from 2 percent position jitter") {
        Rng jrng(3);
        Scene init = truth;
        for (auto& p : init.primitives) {
            for (auto& c : p.mu) c += 0.02 * truth.extent * jrng.normal();
        }
        FitResult fr = fit_scene(frames, init, 200, 0.004);
        CHECK(fr.final_loss <= 0.1 * fr.initial_loss);
    }
}

TEST_CASE("scene JSON round trip") {
    Rng rng(8);
    Scene s = gen_scene(rng, 3, 1.5);
    Scene back = scene_from_json(scene_to_json(s));
    REQUIRE(back.primitives.size() == s.primitives.size());
    CHECK(back.extent == s.extent);
    for (size_t i = 0; i < s.primitives.size(); ++i) {
        CHECK(back.primitives[i].mu == s.primitives[i].mu);
        CHECK(back.primitives[i].quat == s.primitives[i].quat);
        CHECK(back.primitives[i].sigma == s.primitives[i].sigma);
    }
}
