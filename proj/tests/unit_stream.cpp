#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qv/stream.hpp"
#include "qv/tradeoff.hpp"

using namespace qv;

namespace {

StreamHeader make_header(int w, int h, int nbits, int frames, float fps = 2000.0f,
                         float ppp = 3.25f) {
    StreamHeader hd;
    hd.width = static_cast<uint16_t>(w);
    hd.height = static_cast<uint16_t>(h);
    hd.nbits = static_cast<uint8_t>(nbits);
    hd.frame_count = static_cast<uint32_t>(frames);
    hd.fps = fps;
    hd.nominal_ppp = ppp;
    return hd;
}

// Bit-level unpacker written independently of the reader: bit k of a row is
// byte k/8, position k%8 (LSB first).
uint16_t unpack_pixel(const std::vector<uint8_t>& bytes, size_t row_offset, int x, int nbits) {
    uint16_t v = 0;
    for (int b = 0; b < nbits; ++b) {
        const size_t bit = static_cast<size_t>(x) * nbits + b;
        const uint8_t byte = bytes[row_offset + bit / 8];
        v = static_cast<uint16_t>(v | (((byte >> (bit % 8)) & 1u) << b));
    }
    return v;
}

}  // namespace

TEST_CASE("empty stream round-trips as header only") {
    const StreamHeader hd = make_header(4, 4, 3, 0);
    const std::vector<uint8_t> bytes = write_stream({}, hd);
    CHECK(bytes.size() == kQvsHeaderBytes);

    const Stream s = read_stream(bytes);
    CHECK(s.header.width == 4);
    CHECK(s.header.height == 4);
    CHECK(s.header.nbits == 3);
    CHECK(s.header.frame_count == 0);
    CHECK(s.header.fps == 2000.0f);
    CHECK(s.header.nominal_ppp == 3.25f);
    CHECK(s.frames.empty());
}

TEST_CASE("header is little-endian in field order") {
    const StreamHeader hd = make_header(0x0102, 0x0304, 5, 2, 1.0f);
    std::vector<QuantaFrame> frames(2, QuantaFrame(0x0102, 0x0304, uint16_t{0}));
    const std::vector<uint8_t> bytes = write_stream(frames, hd);
    REQUIRE(bytes.size() >= kQvsHeaderBytes);
    CHECK(bytes[0] == 'Q');
    CHECK(bytes[1] == 'V');
    CHECK(bytes[2] == 'S');
    CHECK(bytes[3] == '1');
    CHECK(bytes[4] == 0x02);  // width lo
    CHECK(bytes[5] == 0x01);  // width hi
    CHECK(bytes[6] == 0x04);  // height lo
    CHECK(bytes[7] == 0x03);  // height hi
    CHECK(bytes[8] == 5);     // nbits
    CHECK(bytes[9] == 2);     // frame_count, little-endian
    CHECK(bytes[10] == 0);
    CHECK(bytes[11] == 0);
    CHECK(bytes[12] == 0);
    // fps = 1.0f -> IEEE-754 bytes 00 00 80 3f little-endian
    CHECK(bytes[13] == 0x00);
    CHECK(bytes[14] == 0x00);
    CHECK(bytes[15] == 0x80);
    CHECK(bytes[16] == 0x3f);
}

TEST_CASE("hand-packed 2x2 3-bit frame") {
    QuantaFrame f(2, 2);
    f(0, 0) = 1;
    f(1, 0) = 7;
    f(0, 1) = 0;
    f(1, 1) = 5;
    const std::vector<uint8_t> bytes = write_stream({f}, make_header(2, 2, 3, 1));
    REQUIRE(bytes.size() == kQvsHeaderBytes + 2);

    // Row 0: 1 -> bits 100, 7 -> bits 111 (LSB first), two zero pad bits.
    CHECK(bytes[kQvsHeaderBytes + 0] == 0b00111001);
    // Row 1: 0 -> 000, 5 -> 101, padded.
    CHECK(bytes[kQvsHeaderBytes + 1] == 0b00101000);

    // Cross-check with the independent unpacker.
    const std::vector<uint8_t> payload(bytes.begin() + kQvsHeaderBytes, bytes.end());
    CHECK(unpack_pixel(payload, 0, 0, 3) == 1);
    CHECK(unpack_pixel(payload, 0, 1, 3) == 7);
    CHECK(unpack_pixel(payload, 1, 0, 3) == 0);
    CHECK(unpack_pixel(payload, 1, 1, 3) == 5);
}

TEST_CASE("random streams round-trip byte-exactly") {
    std::mt19937 gen(12345);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = std::uniform_int_distribution<int>(1, 64)(gen);
        const int h = std::uniform_int_distribution<int>(1, 64)(gen);
        const int nbits = std::uniform_int_distribution<int>(1, 16)(gen);
        const int nframes = std::uniform_int_distribution<int>(0, 8)(gen);
        std::uniform_int_distribution<uint32_t> value(0, (1u << nbits) - 1);

        std::vector<QuantaFrame> frames;
        for (int i = 0; i < nframes; ++i) {
            QuantaFrame f(w, h);
            for (auto& v : f) v = static_cast<uint16_t>(value(gen));
            frames.push_back(std::move(f));
        }
        const StreamHeader hd = make_header(w, h, nbits, nframes);
        const std::vector<uint8_t> bytes = write_stream(frames, hd);

        // Stored payload size: rows are byte-aligned.
        CHECK(bytes.size() - kQvsHeaderBytes ==
              static_cast<size_t>(nframes) * h * ((static_cast<size_t>(w) * nbits + 7) / 8));

        const Stream back = read_stream(bytes);
        REQUIRE(back.frames.size() == frames.size());
        for (size_t i = 0; i < frames.size(); ++i) REQUIRE(back.frames[i] == frames[i]);

        const std::vector<uint8_t> again = write_stream(back.frames, back.header);
        REQUIRE(again == bytes);
    }
}

TEST_CASE("stream data rate matches the trade-off table") {
    // A 120x80 sensor has the 9600 pixels of the published table; the
    // logical data rate nbits*fps*pixels must equal the table column.
    const StreamHeader hd = make_header(120, 80, 3, 0, 1428.0f);
    const double bits_per_second =
        double(hd.nbits) * hd.fps * double(hd.width) * double(hd.height);
    const qv::TradeoffRow row = qv::tradeoff_columns(3, 1428, 0.2, 9600);
    CHECK(bits_per_second / 1e6 == Catch::Approx(row.data_rate_mbps).epsilon(1e-12));
}

TEST_CASE("stream error kinds are distinct") {
    QuantaFrame f(3, 2, uint16_t{1});
    const StreamHeader hd = make_header(3, 2, 2, 1);
    std::vector<uint8_t> bytes = write_stream({f}, hd);

    SECTION("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_AS(read_stream(bytes), BadMagicError);
    }
    SECTION("truncated payload") {
        bytes.pop_back();
        CHECK_THROWS_AS(read_stream(bytes), TruncatedStreamError);
    }
    SECTION("missing header") {
        bytes.resize(10);
        CHECK_THROWS_AS(read_stream(bytes), TruncatedStreamError);
    }
    SECTION("trailing bytes") {
        bytes.push_back(0);
        CHECK_THROWS_AS(read_stream(bytes), DataError);
    }
    SECTION("value overflow on write") {
        QuantaFrame big(3, 2, uint16_t{4});  // needs 3 bits, header says 2
        CHECK_THROWS_AS(write_stream({big}, hd), ValueOverflowError);
    }
    SECTION("frame size mismatch") {
        QuantaFrame wrong(4, 2, uint16_t{0});
        CHECK_THROWS_AS(write_stream({wrong}, hd), DataError);
    }
}
