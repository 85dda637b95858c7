#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tdet/metrics.hpp"
#include "tdet/rng.hpp"

namespace fs = std::filesystem;
using namespace tdet;

namespace {

std::vector<ScoreRecord> make_records(const std::vector<double>& real_scores,
                                      const std::vector<double>& fake_scores) {
    std::vector<ScoreRecord> records;
    int i = 0;
    for (const double s : real_scores) {
        records.push_back({"r" + std::to_string(i++), Label::kReal, s});
    }
    i = 0;
    for (const double s : fake_scores) {
        records.push_back({"f" + std::to_string(i++), Label::kFake, s});
    }
    return records;
}

std::vector<ScoreRecord> random_records(Rng& rng, int max_n, bool quantized) {
    std::vector<ScoreRecord> records;
    const int n_real = rng.uniform_int(1, max_n / 2);
    const int n_fake = rng.uniform_int(1, max_n / 2);
    for (int i = 0; i < n_real + n_fake; ++i) {
        ScoreRecord r;
        r.id = "s" + std::to_string(i);
        r.label = i < n_real ? Label::kReal : Label::kFake;
        const double bias = r.label == Label::kFake ? 0.15 : -0.15;
        double s = std::clamp(0.5 + bias + 0.5 * (rng.uniform() - 0.5), 0.0, 1.0);
        if (quantized) s = std::round(s * 8.0) / 8.0;
        r.score = s;
        records.push_back(r);
    }
    return records;
}

}  // namespace

TEST_CASE("auc matches the worked pairwise example") {
    const auto records = make_records({0.1, 0.4}, {0.35, 0.8});
    CHECK(auc(records) == 0.75);
    CHECK(oracle::pairwise_auc(records) == 0.75);
}

TEST_CASE("auc of perfect separation is 1") {
    const auto records = make_records({0.1, 0.2, 0.3}, {0.5, 0.6});
    CHECK(auc(records) == 1.0);
}

TEST_CASE("auc of all-equal scores is one half") {
    const auto records = make_records({0.4, 0.4, 0.4}, {0.4, 0.4});
    CHECK(auc(records) == 0.5);
}

TEST_CASE("auc equals the pairwise oracle on random sets") {
    Rng rng(808);
    for (int iter = 0; iter < 200; ++iter) {
        const auto records = random_records(rng, 30, iter % 3 == 0);
        const double fast = auc(records);
        const double slow = oracle::pairwise_auc(records);
        CHECK(std::abs(fast - slow) <= 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly increasing score maps") {
    Rng rng(909);
    const auto squash = [](double x) { return x * x; };
    const auto shift = [](double x) { return 0.25 + x / 2.0; };
    for (int iter = 0; iter < 50; ++iter) {
        const auto records = random_records(rng, 24, false);
        const double base = auc(records);
        auto mapped = records;
        for (auto& r : mapped) r.score = squash(r.score);
        CHECK(auc(mapped) == base);
        mapped = records;
        for (auto& r : mapped) r.score = shift(r.score);
        CHECK(auc(mapped) == base);
    }
}

TEST_CASE("auc complement under score negation") {
    Rng rng(1010);
    for (int iter = 0; iter < 50; ++iter) {
        const auto records = random_records(rng, 24, false);
        auto flipped = records;
        for (auto& r : flipped) r.score = 1.0 - r.score;
        CHECK(std::abs(auc(flipped) - (1.0 - auc(records))) <= 1e-12);
    }
}

TEST_CASE("eer of perfectly separated scores is zero") {
    const auto records = make_records({0.1, 0.2}, {0.7, 0.9});
    const EerResult e = eer(records);
    CHECK(e.eer == 0.0);
    CHECK(e.threshold == 0.7);
}

TEST_CASE("eer of fully inverted scores is one") {
    const auto records = make_records({0.9}, {0.1});
    const EerResult e = eer(records);
    CHECK(e.eer == 1.0);
    CHECK(e.threshold == 0.9);
}

TEST_CASE("eer of the interleaved example is one half") {
    const auto records = make_records({0.2, 0.6}, {0.4, 0.8});
    const EerResult e = eer(records);
    CHECK(e.eer == 0.5);
    CHECK(e.threshold == 0.6);
}

TEST_CASE("eer matches the sweep oracle and ties resolve to the smallest threshold") {
    Rng rng(1111);
    for (int iter = 0; iter < 100; ++iter) {
        const auto records = random_records(rng, 24, iter % 4 == 0);
        const EerResult e = eer(records);
        const auto [oracle_eer, oracle_t] = oracle::sweep_eer(records);
        CHECK(e.eer == oracle_eer);
        CHECK(e.threshold == oracle_t);
    }
}

TEST_CASE("eer gap at the returned threshold is bounded on untied sets") {
    Rng rng(1212);
    for (int iter = 0; iter < 100; ++iter) {
        const auto records = random_records(rng, 24, false);
        std::size_t n_real = 0, n_fake = 0;
        for (const auto& r : records) (r.label == Label::kReal ? n_real : n_fake) += 1;
        const EerResult e = eer(records);
        double fp = 0, fn = 0;
        for (const auto& r : records) {
            if (r.label == Label::kReal && r.score >= e.threshold) ++fp;
            if (r.label == Label::kFake && r.score < e.threshold) ++fn;
        }
        const double gap =
            std::abs(fp / static_cast<double>(n_real) - fn / static_cast<double>(n_fake));
        CHECK(gap <= 1.0 / static_cast<double>(std::min(n_real, n_fake)));
    }
}

TEST_CASE("roc curve endpoints and the two worked shapes") {
    SECTION("perfect separation, one of each") {
        const auto curve = roc_curve(make_records({0.2}, {0.8}));
        REQUIRE(curve.size() == 3);
        CHECK(curve[0] == RocPoint{0.0, 0.0});
        CHECK(curve[1] == RocPoint{0.0, 1.0});
        CHECK(curve[2] == RocPoint{1.0, 1.0});
    }
    SECTION("all ties collapse to the diagonal") {
        const auto curve = roc_curve(make_records({0.5, 0.5}, {0.5}));
        REQUIRE(curve.size() == 2);
        CHECK(curve[0] == RocPoint{0.0, 0.0});
        CHECK(curve[1] == RocPoint{1.0, 1.0});
    }
}

TEST_CASE("roc curve is monotone and its trapezoid area equals auc") {
    Rng rng(1313);
    for (int iter = 0; iter < 50; ++iter) {
        const auto records = random_records(rng, 20, iter % 2 == 0);
        const auto curve = roc_curve(records);
        REQUIRE(curve.size() >= 2);
        CHECK(curve.front() == RocPoint{0.0, 0.0});
        CHECK(curve.back() == RocPoint{1.0, 1.0});
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].fpr >= curve[i - 1].fpr);
            CHECK(curve[i].tpr >= curve[i - 1].tpr);
        }
        CHECK(std::abs(oracle::trapezoid_area(curve) - auc(records)) <= 1e-12);
    }
}

TEST_CASE("metrics reject single-class and out-of-range input") {
    const auto only_real = make_records({0.1, 0.2}, {});
    CHECK_THROWS_AS(auc(only_real), SingleClassError);
    CHECK_THROWS_AS(eer(only_real), SingleClassError);
    CHECK_THROWS_AS(roc_curve(only_real), SingleClassError);
    CHECK_THROWS_AS(evaluate(only_real), SingleClassError);

    auto bad = make_records({0.1}, {0.9});
    bad[0].score = 1.5;
    CHECK_THROWS_AS(auc(bad), ScoreValueError);
    bad[0].score = std::nan("");
    CHECK_THROWS_AS(auc(bad), ScoreValueError);
}

TEST_CASE("evaluate fills every report field") {
    const auto records = make_records({0.1, 0.2, 0.55}, {0.7, 0.9});
    const EvalReport rep = evaluate(records);
    CHECK(rep.auc == 1.0);
    CHECK(rep.eer == 0.0);
    CHECK(rep.n_real == 3);
    CHECK(rep.n_fake == 2);
    // 0.55 > 1/2 counts as a false positive under the argmax rule
    CHECK(rep.accuracy_at_half == 0.8);
}

TEST_CASE("accuracy at one half resolves the tie to real") {
    const auto records = make_records({0.5}, {0.8});
    CHECK(accuracy_at_half(records) == 1.0);
    const auto flipped = make_records({0.8}, {0.5});
    CHECK(accuracy_at_half(flipped) == 0.0);
}

TEST_CASE("score csv round-trips byte-identically") {
    Rng rng(1414);
    for (int iter = 0; iter < 20; ++iter) {
        const auto records = random_records(rng, 16, iter % 2 == 0);
        const std::string text1 = scores_to_csv(records);
        const auto back = parse_scores_csv(text1);
        CHECK(back == records);
        CHECK(scores_to_csv(back) == text1);
    }
}

TEST_CASE("score csv file io and typed failures") {
    const fs::path dir = fs::temp_directory_path() / "tdet_metrics_io";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto records = make_records({0.25}, {0.75});
    save_scores(records, dir / "scores.csv");
    CHECK(load_scores(dir / "scores.csv") == records);

    CHECK_THROWS_AS(load_scores(dir / "missing.csv"), FileError);
    CHECK_THROWS_AS(parse_scores_csv("id,score\n"), CsvHeaderError);
    CHECK_THROWS_AS(parse_scores_csv("id,label,score\na,0\n"), CsvRowError);
    CHECK_THROWS_AS(parse_scores_csv("id,label,score\na,2,0.5\n"), LabelValueError);
    CHECK_THROWS_AS(parse_scores_csv("id,label,score\na,0,1.5\n"), ScoreValueError);
    CHECK_THROWS_AS(parse_scores_csv("id,label,score\na,0,x\n"), ConfigValueError);
    fs::remove_all(dir);
}

TEST_CASE("report json round-trips") {
    const auto records = make_records({0.1, 0.3}, {0.6, 0.8});
    const EvalReport rep = evaluate(records);
    CHECK(report_from_json(report_to_json(rep)) == rep);
    const std::string text = render_report(rep);
    CHECK(text.find("auc") != std::string::npos);
    CHECK(text.find("eer_threshold") != std::string::npos);
}

TEST_CASE("percent formatting rounds half up to one decimal") {
    CHECK(format_percent_1dp(0.999) == "99.9");
    CHECK(format_percent_1dp(1.0) == "100.0");
    CHECK(format_percent_1dp(0.75) == "75.0");
    CHECK(format_percent_1dp(0.0) == "0.0");
    // 0.8125 = 13/16 exactly, so 812.5 is a true midpoint: half-up gives 81.3
    CHECK(format_percent_1dp(0.8125) == "81.3");
    CHECK(format_percent_1dp(0.9447) == "94.5");
}

TEST_CASE("cross matrix renders an empty map as header only") {
    CHECK(render_cross_matrix({}) == "train\\test\n");
}

TEST_CASE("cross matrix flags the diagonal and fills gaps") {
    CrossResults results;
    EvalReport rep;
    rep.auc = 0.999;
    results[{"A", "A"}] = rep;
    const std::string one = render_cross_matrix(results);
    CHECK(one.find("99.9*") != std::string::npos);

    rep.auc = 0.852;
    results[{"A", "B"}] = rep;
    rep.auc = 0.971;
    results[{"B", "B"}] = rep;
    const std::string two = render_cross_matrix(results);
    CHECK(two.find("85.2") != std::string::npos);
    CHECK(two.find("97.1*") != std::string::npos);

    std::istringstream lines(two);
    std::string header, row_a, row_b;
    std::getline(lines, header);
    std::getline(lines, row_a);
    std::getline(lines, row_b);
    std::istringstream row_b_tokens(row_b);
    std::string name, cell_ba, cell_bb;
    row_b_tokens >> name >> cell_ba >> cell_bb;
    CHECK(name == "B");
    CHECK(cell_ba == "-");
    CHECK(cell_bb == "97.1*");
}

TEST_CASE("cross matrix cells equal the rounding oracle on a 3x3 grid") {
    Rng rng(1515);
    const std::vector<std::string> names = {"dsa", "dsb", "dsc"};
    CrossResults results;
    for (const auto& tr : names) {
        for (const auto& te : names) {
            EvalReport rep;
            rep.auc = rng.uniform();
            results[{tr, te}] = rep;
        }
    }
    const std::string table = render_cross_matrix(results);
    std::istringstream lines(table);
    std::string line;
    std::getline(lines, line);  // header
    for (const auto& tr : names) {
        REQUIRE(std::getline(lines, line));
        std::istringstream tokens(line);
        std::string name;
        tokens >> name;
        CHECK(name == tr);
        for (const auto& te : names) {
            std::string cell;
            tokens >> cell;
            const double a = results[{tr, te}].auc;
            const long long tenths = static_cast<long long>(std::floor(a * 1000.0 + 0.5));
            char buf[32];
            std::snprintf(buf, sizeof buf, "%lld.%lld%s", tenths / 10, tenths % 10,
                          tr == te ? "*" : "");
            CHECK(cell == std::string(buf));
        }
    }
}

TEST_CASE("silhouette separates two tight clusters") {
    std::vector<EmbeddingPoint> points;
    std::vector<Label> labels;
    for (int i = 0; i < 10; ++i) {
        points.push_back({1.0, 0.0});
        labels.push_back(Label::kReal);
        points.push_back({-1.0, 0.0});
        labels.push_back(Label::kFake);
    }
    CHECK(silhouette_two_groups(points, labels) > 0.9);
}

TEST_CASE("silhouette of singleton clusters is zero by convention") {
    const std::vector<EmbeddingPoint> points = {{1.0, 0.0}, {-1.0, 0.0}};
    const std::vector<Label> labels = {Label::kReal, Label::kFake};
    CHECK(silhouette_two_groups(points, labels) == 0.0);
}

TEST_CASE("silhouette input validation") {
    const std::vector<EmbeddingPoint> points = {{1.0, 0.0}, {-1.0, 0.0}};
    CHECK_THROWS_AS(silhouette_two_groups(points, {Label::kReal}), ShapeError);
    CHECK_THROWS_AS(silhouette_two_groups(points, {Label::kReal, Label::kReal}),
                    SingleClassError);
}
