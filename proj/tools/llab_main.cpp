#include <cstdio>

int main() {
  std::puts("llab: CLI under construction");
  return 0;
}
