package g;

public class Calls {

    public void h(int a) {
        check(a + 1);
    }

    void check(int v) {
        if (v == 0) throw new IllegalStateException();
    }

    public void top(int x, int y) {
        int s = x - y;
        mid(s, y);
    }

    void mid(int p, int q) {
        if (q > 0) {
            leaf(p * q);
        }
    }

    void leaf(int z) {
        if (z < -3) {
            throw new IllegalArgumentException("z");
        }
    }
}
