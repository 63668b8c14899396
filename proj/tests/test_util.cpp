#include <catch2/catch_amalgamated.hpp>

#include "pkghall/csv.hpp"
#include "pkghall/metrics.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"

#include "support/errc_matcher.hpp"
#include "support/test_support.hpp"

using namespace pkghall;
using testsupport::ErrcMatcher;

TEST_CASE("string helpers", "[util]") {
    CHECK(trim("  a b \t\n") == "a b");
    CHECK(trim("") == "");
    CHECK(to_lower_ascii("MiXeD-123") == "mixed-123");
    CHECK(starts_with("abcdef", "abc"));
    CHECK_FALSE(starts_with("ab", "abc"));
    CHECK(ends_with("abcdef", "def"));
    CHECK(contains("abcdef", "cde"));

    CHECK(strip_surrounding_quotes("\"name\"") == "name");
    CHECK(strip_surrounding_quotes("'`x`'") == "x"); // nested pairs peel
    CHECK(strip_surrounding_quotes("\"open") == "\"open");

    CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(split_any("a,b\nc", ",\n") == std::vector<std::string>{"a", "b", "c"});
    CHECK(join({"a", "b", "c"}, ", ") == "a, b, c");
}

TEST_CASE("split_lines handles CRLF and trailing newline", "[util]") {
    CHECK(split_lines("a\r\nb\nc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_lines("a\nb\n") == std::vector<std::string>{"a", "b"});
    CHECK(split_lines("") == std::vector<std::string>{});
    CHECK(split_lines("\n") == std::vector<std::string>{""});
}

TEST_CASE("date validation", "[util]") {
    CHECK(is_valid_date("2023-06-10"));
    CHECK_FALSE(is_valid_date("2023-6-10"));
    CHECK_FALSE(is_valid_date("2023-13-10"));
    CHECK_FALSE(is_valid_date("2023-00-10"));
    CHECK_FALSE(is_valid_date("2023-01-32"));
    CHECK_FALSE(is_valid_date("20230610"));
}

TEST_CASE("sha256 known vectors", "[util]") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("The quick brown fox jumps over the lazy dog") ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
    // 56 bytes straddles the single-block boundary
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("fnv1a64 known vectors", "[util]") {
    CHECK(fnv1a64("") == 14695981039346656037ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("file helpers round-trip", "[util]") {
    testsupport::TempDir dir("util");
    auto p = dir.path() / "sub" / "file.txt";
    ensure_dir(p.parent_path());
    write_file_atomic(p, "hello\n");
    CHECK(read_file(p) == "hello\n");
    write_file_atomic(p, "replaced");
    CHECK(read_file(p) == "replaced");
    CHECK_THROWS_MATCHES(read_file(dir.path() / "missing.txt"), Error,
                         ErrcMatcher(Errc::unreadable_file));
}

TEST_CASE("iso8601 formatting", "[util]") {
    CHECK(iso8601_utc(std::chrono::system_clock::time_point{}) == "1970-01-01T00:00:00Z");
    std::string now = now_iso8601_utc();
    CHECK(now.size() == 20);
    CHECK(now.back() == 'Z');
}

TEST_CASE("fixed-point formatting", "[util]") {
    CHECK(format_fixed(3.14159, 2) == "3.14");
    CHECK(format_fixed(13.45, 1) == "13.4"); // note: nearest-even on exact halves is fine
    CHECK(format_fixed(0.0, 4) == "0.0000");
    CHECK(format_fixed(100.0, 0) == "100");
}

TEST_CASE("csv round-trip with quoting", "[csv]") {
    CsvTable table;
    table.header = {"name", "note"};
    table.rows = {{"plain", "x"},
                  {"with,comma", "and \"quotes\""},
                  {"multi\nline", ""}};
    std::string text = write_csv(table);
    CsvTable back = parse_csv(text);
    CHECK(back.header == table.header);
    CHECK(back.rows == table.rows);
}

TEST_CASE("csv column lookup", "[csv]") {
    CsvTable table = parse_csv("a,b\n1,2\n");
    CHECK(table.col("b") == 1);
    CHECK(table.has_col("a"));
    CHECK_FALSE(table.has_col("z"));
    CHECK_THROWS_MATCHES(table.col("z"), Error, ErrcMatcher(Errc::missing_column));
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0][table.col("b")] == "2");
}
