#include <doctest.h>

#include <fstream>
#include <set>

#include "ips/sts.hpp"
#include "support.hpp"

using namespace ips;
using namespace ips::sts;

namespace {

std::vector<StsRecord> synthetic_records(int no_sign, int l50, int l70, int l80) {
    std::vector<StsRecord> out;
    int id = 0;
    auto add = [&](int n, Label label) {
        for (int i = 0; i < n; ++i) out.push_back({"img" + std::to_string(id++) + ".jpg", label, {}});
    };
    add(no_sign, Label::no_sign);
    add(l50, Label::limit_50);
    add(l70, Label::limit_70);
    add(l80, Label::limit_80);
    // Interleave so original order is not grouped by label.
    std::vector<StsRecord> mixed;
    for (std::size_t k = 0; k < out.size(); ++k) mixed.push_back(out[(k * 7) % out.size()]);
    return mixed;
}

std::array<int, kNumLabels> label_counts(const std::vector<StsRecord>& records) {
    std::array<int, kNumLabels> c{};
    for (const auto& r : records) ++c[static_cast<std::size_t>(r.label)];
    return c;
}

} // namespace

TEST_CASE("annotation parsing and labeling") {
    const auto [file, signs] =
        parse_annotation_line("1277381001Image000007.jpg:VISIBLE, 1080.56, 462.74, 1052.28, 432.76, SPEED_LIMIT, 70_SIGN;"
                              "VISIBLE, 800, 400, 780, 380, OTHER, PEDESTRIAN_CROSSING;");
    CHECK(file == "1277381001Image000007.jpg");
    REQUIRE(signs.size() == 2);
    CHECK(signs[0].type == "SPEED_LIMIT");
    CHECK(classify(signs) == Label::limit_70);

    CHECK(parse_annotation_line("empty.jpg:").second.empty());
    CHECK(classify({}) == Label::no_sign);

    std::string reason;
    CHECK_FALSE(classify({{"VISIBLE", "SPEED_LIMIT", "50_SIGN"}, {"VISIBLE", "SPEED_LIMIT", "80_SIGN"}}, &reason));
    CHECK(reason == "conflicting speed limits");
    CHECK_FALSE(classify({{"OCCLUDED", "SPEED_LIMIT", "50_SIGN"}}, &reason));
    CHECK_FALSE(classify({{"VISIBLE", "OTHER", "GIVE_WAY"}}, &reason));
    CHECK_THROWS(parse_annotation_line("no separator"));
    CHECK_THROWS(parse_annotation_line("x.jpg:VISIBLE, 1, 2"));
}

TEST_CASE("published subset totals and strata") {
    CHECK(published_subset_total(0.25, 747) == 184);
    CHECK(published_subset_total(0.5, 747) == 372);
    CHECK(published_subset_total(1.0, 747) == 747);
    CHECK(published_subset_total(0.5, 100) == 50);
    SubsetSpec spec;
    CHECK(stratum_targets(184, spec) == std::array<int, 4>{92, 31, 31, 30});
    CHECK(stratum_targets(372, spec) == std::array<int, 4>{186, 62, 62, 62});
    for (int total : {184, 372}) {
        const auto t = stratum_targets(total, spec);
        CHECK(t[0] + t[1] + t[2] + t[3] == total);
        CHECK(std::abs(t[0] - 0.5 * total) <= 1.0);
        for (int l = 1; l < 4; ++l) CHECK(std::abs(t[l] - total / 6.0) <= 1.0);
    }
}

TEST_CASE("stratified subsets") {
    const auto records = synthetic_records(400, 110, 120, 117);
    REQUIRE(records.size() == 747);

    SubsetSpec quarter{0.25, 1};
    const auto a = stratified_subset(records, quarter);
    CHECK(a.size() == 184);
    CHECK(label_counts(a) == std::array<int, 4>{92, 31, 31, 30});
    CHECK(stratified_subset(records, {0.5, 1}).size() == 372);

    // Same seed reproduces, other seeds change membership but not counts.
    const auto again = stratified_subset(records, quarter);
    std::vector<std::string> ids_a, ids_again, ids_b;
    for (const auto& r : a) ids_a.push_back(r.image.string());
    for (const auto& r : again) ids_again.push_back(r.image.string());
    CHECK(ids_a == ids_again);
    const auto b = stratified_subset(records, {0.25, 2});
    for (const auto& r : b) ids_b.push_back(r.image.string());
    CHECK(ids_a != ids_b);
    CHECK(label_counts(b) == label_counts(a));
    CHECK(std::set<std::string>(ids_a.begin(), ids_a.end()).size() == ids_a.size());

    const auto full = stratified_subset(records, {1.0, 3});
    REQUIRE(full.size() == records.size());
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(full[i].image == records[i].image);

    CHECK_THROWS_AS(stratified_subset(synthetic_records(400, 10, 120, 117), quarter), std::runtime_error);
}

TEST_CASE("ingestion from a directory fixture") {
    const auto root = test::temp_dir("sts");
    for (int set : {1, 2}) {
        const auto ann = root / ("Set" + std::to_string(set));
        const auto img = root / ("Set" + std::to_string(set) + "Part0");
        std::filesystem::create_directories(ann);
        std::filesystem::create_directories(img);
        std::ofstream out(ann / "annotations.txt");
        out << "a.jpg:\n"
            << "b.jpg:VISIBLE, 10, 10, 5, 5, SPEED_LIMIT, 50_SIGN;\n"
            << "c.jpg:VISIBLE, 10, 10, 5, 5, OTHER, GIVE_WAY;\n"
            << "missing.jpg:\n";
        for (const char* name : {"a.jpg", "b.jpg", "c.jpg"}) std::ofstream(img / name) << "x";
    }
    const auto ds = ingest_sts(root);
    REQUIRE(ds.train.records.size() == 2);
    CHECK(ds.train.records[0].label == Label::no_sign);
    CHECK(ds.train.records[1].label == Label::limit_50);
    CHECK(ds.train.excluded.size() == 2);
    CHECK(ds.train.warnings.size() == 1);
    CHECK(ds.validation.warnings.size() == 1);

    const auto manifest = to_manifest(ds);
    const auto back = split_from_manifest(manifest, "train");
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[1].image == ds.train.records[1].image);
    CHECK(back.records[1].label == Label::limit_50);
    CHECK(manifest.at("train").at("excluded").size() == 2);

    std::filesystem::remove(root / "Set2" / "annotations.txt");
    CHECK_THROWS_AS(ingest_sts(root), std::runtime_error);
    std::filesystem::remove_all(root);
}
