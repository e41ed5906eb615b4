#include "doctest.h"

#include <random>
#include <string>

#include "revgen/xml.hpp"

using namespace revgen;

TEST_CASE("minimal element parses with attributes, children, and text") {
    std::string doc =
        "<paragraph topic=\"t\"><text>a [10.1/x]</text>"
        "<references><doi>10.1/x</doi></references></paragraph>";
    auto root = xml::extract_root(doc, "paragraph");
    REQUIRE(root.ok());
    CHECK(root.value().name == "paragraph");
    CHECK(root.value().attribute("topic") == "t");
    REQUIRE(root.value().child("text") != nullptr);
    CHECK(root.value().child("text")->text == "a [10.1/x]");
    auto dois = root.value().child("references")->children_named("doi");
    REQUIRE(dois.size() == 1);
    CHECK(dois[0]->text == "10.1/x");
}

TEST_CASE("chatter before and after the root is tolerated") {
    std::string doc = "Sure, here is the XML:\n<verdict><choice>A</choice></verdict>\nHope it helps!";
    auto root = xml::extract_root(doc, "verdict");
    REQUIRE(root.ok());
    CHECK(root.value().child("choice")->text == "A");
}

TEST_CASE("a broken mention in chatter does not hide the real root") {
    std::string doc = "the <verdict> tag is required, like so: <verdict><choice>B</choice></verdict>";
    auto root = xml::extract_root(doc, "verdict");
    REQUIRE(root.ok());
    REQUIRE(root.value().child("choice") != nullptr);
    CHECK(root.value().child("choice")->text == "B");
}

TEST_CASE("truncated output is an unclosed-tag failure") {
    auto r = xml::extract_root("<paragraph><text>abc", "paragraph");
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == "unclosed_tag");
}

TEST_CASE("mismatched close tag is detected") {
    auto r = xml::extract_root("<verdict><choice>A</verdict></choice>", "verdict");
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == "mismatched_tag");
}

TEST_CASE("two roots are rejected, nested same-name elements are not") {
    auto dup = xml::extract_root("<record></record><record></record>", "record");
    REQUIRE_FALSE(dup.ok());
    CHECK(dup.error().code == "duplicate_root");

    auto nested = xml::extract_root("<record><record>inner</record></record>", "record");
    REQUIRE(nested.ok());
    REQUIRE(nested.value().child("record") != nullptr);
    CHECK(nested.value().child("record")->text == "inner");
}

TEST_CASE("missing root is reported as such") {
    auto r = xml::extract_root("no xml at all", "answers");
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == "missing_root");
}

TEST_CASE("entities decode in text and attributes; bare ampersand is literal") {
    auto r = xml::extract_root("<v a=\"x &amp; y\">1 &lt; 2 &#65; &#x42; AT&T</v>", "v");
    REQUIRE(r.ok());
    CHECK(r.value().attribute("a") == "x & y");
    CHECK(r.value().text == "1 < 2 A B AT&T");
}

TEST_CASE("self-closing tags and comments and prolog are handled") {
    std::string doc =
        "<?xml version=\"1.0\"?>\n<!-- preamble -->\n"
        "<record><field name=\"year\"/><!-- inner --><field name=\"type\">Pt</field></record>";
    auto r = xml::extract_root(doc, "record");
    REQUIRE(r.ok());
    REQUIRE(r.value().children.size() == 2);
    CHECK(r.value().children[0].text.empty());
    CHECK(r.value().children[1].text == "Pt");
}

TEST_CASE("malformed attributes are typed failures") {
    CHECK(xml::extract_root("<v a=b></v>", "v").error().code == "bad_attribute");
    CHECK(xml::extract_root("<v a=\"1\" a=\"2\"></v>", "v").error().code == "duplicate_attribute");
    CHECK(xml::extract_root("<v =\"1\"></v>", "v").error().code == "bad_attribute");
}

TEST_CASE("stray markup inside an element fails") {
    auto r = xml::extract_root("<v>a < b</v>", "v");
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().code == "stray_markup");
}

TEST_CASE("a root mention inside a comment is not a candidate") {
    auto r = xml::extract_root("<!-- <verdict>junk --><verdict><score>5</score></verdict>", "verdict");
    REQUIRE(r.ok());
    CHECK(r.value().child("score")->text == "5");
}

TEST_CASE("escape round-trips through the parser") {
    std::string hostile = "a<b&c>\"d'e";
    std::string doc = "<v>" + xml::escape(hostile) + "</v>";
    auto r = xml::extract_root(doc, "v");
    REQUIRE(r.ok());
    CHECK(r.value().text == hostile);
}

// Totality: arbitrary bytes must produce a value or a typed error, never a
// crash or exception. Random garbage plus random mutations of a valid doc.
TEST_CASE("parser is total on arbitrary input") {
    std::mt19937 rng(20240816u);
    const std::string valid =
        "<answers><item qid=\"Q1\"><relevant>true</relevant>"
        "<answer>a</answer><evidence>e</evidence></item></answers>";
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<std::size_t> pick_len(0, 120);

    for (int iter = 0; iter < 2000; ++iter) {
        std::string input;
        if (iter % 2 == 0) {
            std::size_t len = pick_len(rng);
            for (std::size_t i = 0; i < len; ++i) input.push_back(static_cast<char>(byte(rng)));
        } else {
            input = valid;
            std::uniform_int_distribution<std::size_t> pos(0, input.size() - 1);
            for (int m = 0; m < 4; ++m) {
                switch (byte(rng) % 3) {
                    case 0: input[pos(rng)] = static_cast<char>(byte(rng)); break;
                    case 1: input.erase(pos(rng) % input.size(), 1); break;
                    default: input.insert(pos(rng) % input.size(), 1, static_cast<char>(byte(rng)));
                }
                if (input.empty()) input = "x";
            }
        }
        auto r = xml::extract_root(input, "answers");
        if (!r.ok()) CHECK_FALSE(r.error().code.empty());
    }
}
