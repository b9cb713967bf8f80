#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "atomflux/event_log.hpp"

using namespace atomflux;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("csv writer emits format tag, header, then exact rows", "[log]") {
    TempFile tmp("log_test_basic.csv");
    {
        CsvWriter csv(tmp.path, "flux-v1", {"cycle", "mu", "note"});
        csv.row(1, 5.25, "ok");
        csv.row(2, 0.5, std::string("later"));
    }
    CHECK(slurp(tmp.path) ==
          "#format flux-v1\n"
          "cycle,mu,note\n"
          "1,5.25,ok\n"
          "2,0.5,later\n");
}

TEST_CASE("csv writer formats bools and doubles deterministically", "[log]") {
    TempFile tmp("log_test_types.csv");
    {
        CsvWriter csv(tmp.path, "t", {"b", "x", "n"});
        csv.row(true, 0.1, static_cast<std::int64_t>(-7));
        csv.row(false, 1e300, static_cast<std::uint64_t>(18446744073709551615ULL));
    }
    CHECK(slurp(tmp.path) ==
          "#format t\n"
          "b,x,n\n"
          "true,0.1,-7\n"
          "false,1e+300,18446744073709551615\n");
}

TEST_CASE("csv writer rejects wrong arity and embedded delimiters", "[log]") {
    TempFile tmp("log_test_arity.csv");
    CsvWriter csv(tmp.path, "t", {"a", "b"});
    CHECK_THROWS_AS(csv.row(1), std::logic_error);
    CHECK_THROWS_AS(csv.row(1, 2, 3), std::logic_error);
    CHECK_THROWS_AS(csv.row("with,comma", 2), std::logic_error);
    CHECK_THROWS_AS(csv.row("with\nnewline", 2), std::logic_error);
    CHECK_NOTHROW(csv.row("fine", 2));
}

TEST_CASE("csv writer refuses unwritable paths", "[log]") {
    CHECK_THROWS_AS(CsvWriter("no_such_dir/x.csv", "t", {"a"}), std::runtime_error);
    CHECK_THROWS_AS(JsonlWriter("no_such_dir/x.jsonl"), std::runtime_error);
}

TEST_CASE("jsonl lines are valid json with fields in insertion order", "[log]") {
    TempFile tmp("log_test_basic.jsonl");
    {
        JsonlWriter log(tmp.path);
        auto line = log.line();
        line.field("event", "refill")
            .field("cycle", 12)
            .field("duty", 0.88)
            .field("synced", true);
        line.commit();
        auto second = log.line();
        second.field("event", "stall").field("wait_us", static_cast<std::int64_t>(21000));
        second.commit();
    }
    std::string text = slurp(tmp.path);
    CHECK(text ==
          "{\"event\":\"refill\",\"cycle\":12,\"duty\":0.88,\"synced\":true}\n"
          "{\"event\":\"stall\",\"wait_us\":21000}\n");

    // every line must be machine-parseable
    std::istringstream lines(text);
    std::string line;
    int parsed = 0;
    while (std::getline(lines, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        REQUIRE(j.is_object());
        ++parsed;
    }
    CHECK(parsed == 2);
}

TEST_CASE("json string escaping covers quotes, backslashes, and control bytes", "[log]") {
    TempFile tmp("log_test_escape.jsonl");
    {
        JsonlWriter log(tmp.path);
        auto line = log.line();
        line.field("msg", "say \"hi\"\\\n\tdone\r");
        line.field("ctl", std::string("\x01\x1f"));
        line.commit();
    }
    std::string text = slurp(tmp.path);
    nlohmann::json j = nlohmann::json::parse(text);
    CHECK(j["msg"].get<std::string>() == "say \"hi\"\\\n\tdone\r");
    CHECK(j["ctl"].get<std::string>() == std::string("\x01\x1f"));
    CHECK(text.find("\\u0001") != std::string::npos);
    CHECK(text.find("\\u001f") != std::string::npos);
}

TEST_CASE("writers stream large outputs without buffering the whole log", "[log]") {
    TempFile tmp("log_test_large.csv");
    const int n = 200000;
    {
        CsvWriter csv(tmp.path, "big", {"i", "sq"});
        for (int i = 0; i < n; ++i) csv.row(i, static_cast<std::int64_t>(i) * i);
    }
    std::ifstream in(tmp.path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    CHECK(line == "#format big");
    std::getline(in, line);
    CHECK(line == "i,sq");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == n);
}

TEST_CASE("identical data produces identical bytes on rewrite", "[log]") {
    TempFile a("log_test_det_a.jsonl"), b("log_test_det_b.jsonl");
    auto write = [](const std::string& path) {
        JsonlWriter log(path);
        for (int i = 0; i < 500; ++i) {
            auto line = log.line();
            line.field("i", i).field("x", 0.1 * i).field("tag", "t");
            line.commit();
        }
    };
    write(a.path);
    write(b.path);
    CHECK(slurp(a.path) == slurp(b.path));
}
