#include <sstream>

#include <gtest/gtest.h>

#include "memlab/losses.hpp"
#include "memlab/memory.hpp"
#include "support/fixtures.hpp"

using namespace memlab;

namespace {

std::vector<double> row_of(const Tensor2& t, std::size_t r) {
  auto s = t.row(r);
  return {s.begin(), s.end()};
}

std::vector<double> slot_of(const MemoryBank& b, std::size_t i, std::size_t k) {
  auto s = b.slot(i, k);
  return {s.begin(), s.end()};
}

}  // namespace

TEST(MemoryBank, InitFillsEverySlotWithCleanInput) {
  auto x = fixtures::random_tensor(3, 4, 1);
  auto bank = MemoryBank::init_clean(x, 2);
  EXPECT_EQ(bank.n_samples(), 3u);
  EXPECT_EQ(bank.K(), 2u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(slot_of(bank, i, k), row_of(x, i));
      EXPECT_EQ(bank.slot_epoch(i, k), -1);
    }
  }
  EXPECT_THROW(MemoryBank::init_clean(Tensor2(0, 2), 1), DataError);
  EXPECT_THROW(MemoryBank::init_clean(x, 0), ContractError);
}

TEST(MemoryBank, FreshBankGivesZeroMemoryTerm) {
  auto net = fixtures::random_network({4, 5, 3}, 2);
  auto x = fixtures::random_tensor(6, 4, 3);
  auto y = fixtures::random_labels(6, 3, 4);
  auto bank = MemoryBank::init_clean(x, 3);
  std::vector<std::size_t> ids{0, 1, 2, 3, 4, 5};
  auto mem = bank.fetch(ids);
  EXPECT_EQ(memloss_k_term(net, x, y, mem, std::vector<double>{1.0, 2.0, 3.0}).total, 0.0);
}

TEST(MemoryBank, FetchIsPureAndFollowsIndexOrder) {
  auto x = fixtures::random_tensor(5, 2, 5);
  auto bank = MemoryBank::init_clean(x, 2);
  bank.push(std::vector<std::size_t>{0, 1, 2, 3, 4}, fixtures::random_tensor(5, 2, 6), 1);
  std::vector<std::size_t> perm{3, 0, 4, 1};
  auto a = bank.fetch(perm);
  EXPECT_EQ(a, bank.fetch(perm));
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(row_of(a[k], i), slot_of(bank, perm[i], k));
  }
  EXPECT_THROW(bank.fetch(std::vector<std::size_t>{5}), ShapeError);
}

TEST(MemoryBank, PushShiftsOldestOut) {
  Tensor2 x(2, 1, {0.0, 10.0});
  auto bank = MemoryBank::init_clean(x, 3);
  std::vector<std::size_t> id0{0};
  bank.push(id0, Tensor2(1, 1, {1.0}), 1);  // a
  bank.push(id0, Tensor2(1, 1, {2.0}), 2);  // b
  bank.push(id0, Tensor2(1, 1, {3.0}), 3);  // c
  EXPECT_EQ(slot_of(bank, 0, 0), std::vector<double>{1.0});
  EXPECT_EQ(slot_of(bank, 0, 1), std::vector<double>{2.0});
  EXPECT_EQ(slot_of(bank, 0, 2), std::vector<double>{3.0});
  EXPECT_EQ(bank.slot_epoch(0, 0), 1);
  EXPECT_EQ(bank.slot_epoch(0, 2), 3);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(slot_of(bank, 1, k), std::vector<double>{10.0});
  bank.push(id0, Tensor2(1, 1, {4.0}), 4);
  EXPECT_EQ(slot_of(bank, 0, 0), std::vector<double>{2.0});
}

TEST(MemoryBank, SingleSlotIsOverwritten) {
  auto bank = MemoryBank::init_clean(Tensor2(1, 2, {0.0, 0.0}), 1);
  bank.push(std::vector<std::size_t>{0}, Tensor2(1, 2, {1.0, 2.0}), 1);
  bank.push(std::vector<std::size_t>{0}, Tensor2(1, 2, {3.0, 4.0}), 2);
  EXPECT_EQ(slot_of(bank, 0, 0), (std::vector<double>{3.0, 4.0}));
}

TEST(MemoryBank, PushShapeMismatchThrows) {
  auto bank = MemoryBank::init_clean(fixtures::random_tensor(3, 2, 1), 2);
  EXPECT_THROW(bank.push(std::vector<std::size_t>{0, 1}, Tensor2(1, 2), 1), ShapeError);
  EXPECT_THROW(bank.push(std::vector<std::size_t>{0}, Tensor2(1, 3), 1), ShapeError);
}

TEST(MemoryBank, RoundTripIsBitExact) {
  auto bank = MemoryBank::init_clean(fixtures::random_tensor(4, 3, 7), 2);
  std::stringstream fresh;
  bank.save(fresh);
  EXPECT_EQ(MemoryBank::load(fresh), bank);
  bank.push(std::vector<std::size_t>{2, 0}, fixtures::random_tensor(2, 3, 8, -1e-300, 1e300), 5);
  std::stringstream ss;
  bank.save(ss);
  EXPECT_EQ(MemoryBank::load(ss), bank);
  std::stringstream bad("memlab-bank 1\nshape 2 2\n");
  EXPECT_THROW(MemoryBank::load(bad), DataError);
}
