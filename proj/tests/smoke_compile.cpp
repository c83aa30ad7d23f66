#include "dsfm/dsfm.hpp"
int main() {}
