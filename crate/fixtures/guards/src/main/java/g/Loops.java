package g;

public class Loops {

    public void forLoop(int n, int k) {
        for (int i = 0; i < n; i++) {
            if (k > 5) {
                throw new IllegalStateException("k");
            }
        }
    }

    public void whileLoop(int n) {
        while (n > 10) {
            if (n % 2 == 1) {
                throw new IllegalStateException("odd");
            }
            n = n - 2;
        }
    }
}
