#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "traj/dataset.hpp"

using namespace traj;

TEST(SynthGenerate, DefaultConfigYields135Records) {
    SynthConfig cfg;  // 9 actions x 5 targets x 1 participant x 3 reps
    cfg.seed = 7;
    const DemoSet set = synth_generate(cfg);
    EXPECT_EQ(set.records.size(), 135u);
    EXPECT_EQ(set.provenance, Provenance::Synthetic);
}

TEST(SynthGenerate, ZeroNoiseMakesRepetitionsIdentical) {
    SynthConfig cfg;
    cfg.noise = 0.0;
    cfg.actions = {Action::PickAndPlace};
    cfg.targets = {{1, 1}};
    cfg.seed = 3;
    const DemoSet set = synth_generate(cfg);
    ASSERT_EQ(set.records.size(), 3u);
    for (int r = 1; r < 3; ++r) {
        ASSERT_EQ(set.records[0].trajectory.size(), set.records[r].trajectory.size());
        for (std::size_t i = 0; i < set.records[0].trajectory.size(); ++i)
            EXPECT_EQ(set.records[0].trajectory.positions[i],
                      set.records[static_cast<std::size_t>(r)].trajectory.positions[i]);
    }
}

TEST(SynthGenerate, PushStaysInTablePlane) {
    SynthConfig cfg;
    cfg.actions = {Action::Push};
    cfg.targets = placemat_targets();
    cfg.seed = 11;
    for (const DemoRecord& rec : synth_generate(cfg).records)
        for (const auto& p : rec.trajectory.positions) EXPECT_NEAR(p.z(), 0.0, 1e-9);
}

TEST(SynthGenerate, DeterministicForFixedSeed) {
    SynthConfig cfg;
    cfg.seed = 42;
    const DemoSet a = synth_generate(cfg);
    const DemoSet b = synth_generate(cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i)
        for (std::size_t k = 0; k < a.records[i].trajectory.size(); ++k)
            EXPECT_EQ(a.records[i].trajectory.positions[k], b.records[i].trajectory.positions[k]);
}

TEST(SynthGenerate, ReversedActionsRunBackToStart) {
    SynthConfig cfg;
    cfg.actions = {Action::TakeDown};
    cfg.targets = {{2, 2}};
    cfg.seed = 1;
    const DemoSet set = synth_generate(cfg);
    const DemoRecord& rec = set.records.front();
    EXPECT_EQ(rec.start, (GridPoint{2, 2}));
    EXPECT_EQ(rec.target, kGridStart);
    EXPECT_EQ(rec.varied_point(), (GridPoint{2, 2}));
    // starts elevated at the grid cell, ends on the table at S
    EXPECT_NEAR((rec.trajectory.front().head<2>() - grid_to_metric({2, 2}).head<2>()).norm(), 0.0,
                0.05);
    EXPECT_NEAR(rec.trajectory.back().head<2>().norm(), 0.0, 0.05);
}

TEST(SynthGenerate, RejectsEmptyActions) {
    SynthConfig cfg;
    cfg.actions.clear();
    EXPECT_THROW(synth_generate(cfg), std::invalid_argument);
}

TEST(Placemat, ThirteenTargetsWithTenCentimeterSpacing) {
    EXPECT_EQ(placemat_targets().size(), 13u);
    EXPECT_EQ(grid_to_metric(kGridStart), Eigen::Vector3d::Zero());
    const Eigen::Vector3d step =
        grid_to_metric({kGridStart.col + 1, kGridStart.row}) - grid_to_metric(kGridStart);
    EXPECT_DOUBLE_EQ(step.norm(), 0.10);
    // the mirrored lateral cells sit at the same distance from S
    EXPECT_NEAR(grid_to_metric({2, 2}).norm(), grid_to_metric({6, 2}).norm(), 1e-12);
}

TEST(DatasetIo, RoundTripIsBitwiseEqual) {
    SynthConfig cfg;
    cfg.actions = {Action::PickAndPlace, Action::Pull};
    cfg.targets = {{1, 0}, {1, 2}};
    cfg.seed = 9;
    const DemoSet set = synth_generate(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "traj_roundtrip";
    std::filesystem::remove_all(dir);
    const auto manifest = save_dataset(set, dir);
    const DemoSet loaded = load_dataset(manifest);
    ASSERT_EQ(loaded.records.size(), set.records.size());
    EXPECT_EQ(loaded.provenance, Provenance::Loaded);
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const auto& a = set.records[i];
        const auto& b = loaded.records[i];
        EXPECT_EQ(a.action, b.action);
        EXPECT_EQ(a.start, b.start);
        EXPECT_EQ(a.target, b.target);
        EXPECT_EQ(a.repetition, b.repetition);
        ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
        for (std::size_t k = 0; k < a.trajectory.size(); ++k)
            EXPECT_EQ(a.trajectory.positions[k], b.trajectory.positions[k]);
    }
    std::filesystem::remove_all(dir);
}

namespace {

std::filesystem::path write_csv(const std::string& name, const std::string& content) {
    const auto dir = std::filesystem::temp_directory_path() / "traj_loader";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream out(path);
    out << content;
    return path;
}

std::filesystem::path write_manifest(const std::string& csv_name) {
    const auto dir = std::filesystem::temp_directory_path() / "traj_loader";
    const auto path = dir / "manifest.json";
    std::ofstream out(path);
    out << R"([{"file": ")" << csv_name
        << R"(", "action": "push", "participant": 1, "start": [4,0], "target": [1,0], "repetition": 1}])";
    return path;
}

}  // namespace

TEST(DatasetIo, HundredHertzFileKeepsSampleCount) {
    std::string csv = "t,x,y,z\n";
    for (int i = 0; i < 83; ++i) {
        char line[96];
        std::snprintf(line, sizeof(line), "%.4f,%.3f,0.0,0.0\n", 0.01 * i, 0.001 * i);
        csv += line;
    }
    write_csv("ok.csv", csv);
    const DemoSet set = load_dataset(write_manifest("ok.csv"));
    ASSERT_EQ(set.records.size(), 1u);
    EXPECT_EQ(set.records[0].trajectory.size(), 83u);
    EXPECT_NEAR(set.records[0].trajectory.duration(), 0.82, 1e-9);
}

TEST(DatasetIo, ResamplesOtherRates) {
    std::string csv = "t,x,y,z\n";
    for (int i = 0; i < 41; ++i) {  // 50 Hz, 0.8 s
        char line[96];
        std::snprintf(line, sizeof(line), "%.4f,%.3f,0.0,0.0\n", 0.02 * i, 0.002 * i);
        csv += line;
    }
    write_csv("rate.csv", csv);
    const DemoSet set = load_dataset(write_manifest("rate.csv"));
    EXPECT_EQ(set.records[0].trajectory.size(), 81u);
    EXPECT_NEAR(set.records[0].trajectory.dt, 0.01, 1e-9);
}

TEST(DatasetIo, EmptyFileIsParseError) {
    write_csv("empty.csv", "t,x,y,z\n");
    EXPECT_THROW(load_dataset(write_manifest("empty.csv")), ParseError);
}

TEST(DatasetIo, MalformedRowNamesFileAndLine) {
    write_csv("bad.csv", "t,x,y,z\n0.0,0.0,0.0,0.0\n0.01,oops,0.0,0.0\n");
    try {
        load_dataset(write_manifest("bad.csv"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("bad.csv"), std::string::npos);
        EXPECT_NE(msg.find(":3"), std::string::npos);
    }
}

TEST(DatasetIo, NonMonotoneTimestampsAreSchemaError) {
    write_csv("mono.csv", "t,x,y,z\n0.0,0,0,0\n0.02,0,0,0\n0.01,0,0,0\n");
    EXPECT_THROW(load_dataset(write_manifest("mono.csv")), SchemaError);
}

TEST(DatasetIo, IrregularSpacingIsSchemaError) {
    write_csv("jitter.csv", "t,x,y,z\n0.0,0,0,0\n0.01,0,0,0\n0.05,0,0,0\n");
    EXPECT_THROW(load_dataset(write_manifest("jitter.csv")), SchemaError);
}
